//! Objective functions: coverage (NC or DSA), neuron similarity between an
//! input and its follow-ups, and kill ratio.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::image::LabeledDataset;
use crate::model::{ActivationTrace, ForwardOutput, MlpModel};
use crate::rng::stream;
use crate::transforms::{render_chain, HmrChain};

/// Coverage (maximised), similarity (minimised), kill ratio (maximised).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveVector {
    pub coverage: f64,
    pub similarity: f64,
    pub kill_ratio: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CoverageCriterion {
    Nc,
    Dsa,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CoverageConfig {
    pub criterion: CoverageCriterion,
    pub nc_threshold: f64,
    pub dsa_buckets: usize,
    pub dsa_upper: f64,
    /// Largest number of calibration traces kept in the DSA reference bank.
    pub dsa_bank_cap: usize,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            criterion: CoverageCriterion::Nc,
            nc_threshold: 0.25,
            dsa_buckets: 1000,
            dsa_upper: 2.0,
            dsa_bank_cap: 2000,
        }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nc_threshold >= 0.0) {
            return Err(Error::InvalidArgument("nc_threshold must be >= 0".into()));
        }
        if self.dsa_buckets == 0 {
            return Err(Error::InvalidArgument("dsa_buckets must be >= 1".into()));
        }
        if !(self.dsa_upper > 0.0) {
            return Err(Error::InvalidArgument("dsa_upper must be > 0".into()));
        }
        if self.dsa_bank_cap == 0 {
            return Err(Error::InvalidArgument("dsa_bank_cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Set of neurons activated above a threshold by at least one trace.
#[derive(Debug, Clone)]
pub struct CoverageSet {
    threshold: f64,
    hit: Vec<bool>,
}

impl CoverageSet {
    pub fn new(neurons: usize, threshold: f64) -> Self {
        Self {
            threshold,
            hit: vec![false; neurons],
        }
    }

    pub fn add(&mut self, trace: &[f64]) -> Result<()> {
        if trace.len() != self.hit.len() {
            return Err(Error::LengthMismatch(self.hit.len(), trace.len()));
        }
        for (h, v) in self.hit.iter_mut().zip(trace) {
            *h |= *v > self.threshold;
        }
        Ok(())
    }

    pub fn coverage(&self) -> f64 {
        if self.hit.is_empty() {
            return 0.0;
        }
        self.hit.iter().filter(|h| **h).count() as f64 / self.hit.len() as f64
    }
}

/// Fraction of neurons whose value exceeds `threshold` in some trace.
pub fn neuron_coverage(traces: &[ActivationTrace], threshold: f64) -> Result<f64> {
    let first = traces.first().ok_or(Error::EmptyTraceSet)?;
    let mut set = CoverageSet::new(first.len(), threshold);
    for t in traces {
        set.add(t.values())?;
    }
    Ok(set.coverage())
}

/// Calibration traces grouped by predicted class, for DSA.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    by_class: Vec<Vec<Vec<f64>>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ReferenceBank {
    /// Builds a bank from `(predicted class, trace)` pairs.
    pub fn new(num_classes: usize, entries: impl IntoIterator<Item = (usize, Vec<f64>)>) -> Result<Self> {
        let mut by_class = vec![Vec::new(); num_classes];
        let mut width = None;
        for (class, trace) in entries {
            if class >= num_classes {
                return Err(Error::InvalidArgument(format!("class {class} out of range")));
            }
            match width {
                None => width = Some(trace.len()),
                Some(w) if w != trace.len() => return Err(Error::LengthMismatch(w, trace.len())),
                _ => {}
            }
            by_class[class].push(trace);
        }
        let w = width.unwrap_or(0);
        let mut lo = vec![f64::INFINITY; w];
        let mut hi = vec![f64::NEG_INFINITY; w];
        for t in by_class.iter().flatten() {
            for (j, v) in t.iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
        Ok(Self { by_class, lo, hi })
    }

    /// Traces of `data` under `model`, indexed by predicted class. At most
    /// `cap` inputs are kept, drawn uniformly without replacement.
    pub fn from_dataset(model: &MlpModel, data: &LabeledDataset, cap: usize, seed: u64) -> Result<Self> {
        let mut idx: Vec<usize> = if data.len() > cap {
            sample(&mut stream(seed, &[0xba4c]), data.len(), cap).into_vec()
        } else {
            (0..data.len()).collect()
        };
        idx.sort_unstable();
        let mut entries = Vec::with_capacity(idx.len());
        for i in idx {
            let out = model.forward(data.image(i), None)?;
            entries.push((out.predicted(), out.trace.values().to_vec()));
        }
        Self::new(model.num_classes(), entries)
    }

    pub fn class_traces(&self, class: usize) -> &[Vec<f64>] {
        self.by_class.get(class).map_or(&[], Vec::as_slice)
    }

    /// Per-neuron minimum and maximum over the whole bank.
    pub fn ranges(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn nearest<'a>(query: &[f64], refs: impl Iterator<Item = &'a Vec<f64>>) -> Option<(f64, &'a [f64])> {
    let mut best: Option<(f64, &[f64])> = None;
    for r in refs {
        let d = euclidean(query, r);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, r));
        }
    }
    best
}

/// Distance-based surprise of `trace` predicted as `predicted`.
///
/// With `x_a` the nearest same-class reference and `x_b` the other-class
/// reference nearest to `x_a`, the score is `|t − x_a| / |t − x_b|`.
pub fn dsa_score(trace: &[f64], predicted: usize, bank: &ReferenceBank) -> Result<f64> {
    let (dist_a, anchor) =
        nearest(trace, bank.class_traces(predicted).iter()).ok_or(Error::MissingClassBank(predicted))?;
    let others = bank
        .by_class
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != predicted)
        .flat_map(|(_, ts)| ts.iter());
    let Some((_, x_b)) = nearest(anchor, others) else {
        let other = (predicted + 1) % bank.by_class.len().max(1);
        return Err(Error::MissingClassBank(other));
    };
    let dist_b = euclidean(trace, x_b);
    Ok(if dist_a == 0.0 {
        0.0
    } else if dist_b == 0.0 {
        f64::INFINITY
    } else {
        dist_a / dist_b
    })
}

/// Fraction of the `buckets` equal cells of `[0, upper]` holding a score.
/// Scores outside the interval fill nothing.
pub fn dsa_coverage(scores: &[f64], buckets: usize, upper: f64) -> f64 {
    if buckets == 0 {
        return 0.0;
    }
    let mut filled = vec![false; buckets];
    for &s in scores {
        if (0.0..=upper).contains(&s) {
            let b = ((s / upper) * buckets as f64) as usize;
            filled[b.min(buckets - 1)] = true;
        }
    }
    filled.iter().filter(|f| **f).count() as f64 / buckets as f64
}

/// Per-neuron distance used by [`neuron_similarity`].
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityMetric {
    /// Hamming distance between traces binarised at `threshold`.
    Hamming { threshold: f64 },
    /// L1 distance between traces min-max normalised per neuron (clamped to
    /// [0, 1]); neurons with zero range contribute nothing.
    NormalizedL1 { lo: Vec<f64>, hi: Vec<f64> },
}

impl SimilarityMetric {
    pub fn for_config(config: &CoverageConfig, bank: Option<&ReferenceBank>) -> Result<Self> {
        match config.criterion {
            CoverageCriterion::Nc => Ok(Self::Hamming {
                threshold: config.nc_threshold,
            }),
            CoverageCriterion::Dsa => {
                let bank = bank.ok_or_else(|| Error::InvalidArgument("DSA needs a reference bank".into()))?;
                let (lo, hi) = bank.ranges();
                Ok(Self::NormalizedL1 {
                    lo: lo.to_vec(),
                    hi: hi.to_vec(),
                })
            }
        }
    }

    fn encode(&self, trace: &[f64]) -> Vec<f64> {
        match self {
            Self::Hamming { threshold } => trace
                .iter()
                .map(|v| if *v > *threshold { 1.0 } else { 0.0 })
                .collect(),
            Self::NormalizedL1 { lo, hi } => trace
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| {
                    let range = h - l;
                    if range > 0.0 {
                        ((v - l) / range).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}

fn pairwise_similarity(encoded: &[Vec<f64>]) -> f64 {
    let n = encoded[0].len();
    let k = encoded.len();
    let pairs = (k * (k - 1) / 2) as f64;
    if n == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            sum += encoded[i]
                .iter()
                .zip(&encoded[j])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        }
    }
    sum / (n as f64 * pairs)
}

/// Mean per-neuron pairwise distance among an input's trace and the traces
/// of its follow-ups, in [0, 1]. The search minimises it.
pub fn neuron_similarity(tuple: &[ActivationTrace], metric: &SimilarityMetric) -> Result<f64> {
    if tuple.len() < 2 {
        return Err(Error::InvalidArgument("similarity needs at least two traces".into()));
    }
    let n = tuple[0].len();
    if let Some(t) = tuple.iter().find(|t| t.len() != n) {
        return Err(Error::LengthMismatch(n, t.len()));
    }
    if let SimilarityMetric::NormalizedL1 { lo, hi } = metric {
        if lo.len() != n || hi.len() != n {
            return Err(Error::LengthMismatch(n, lo.len()));
        }
    }
    let encoded: Vec<Vec<f64>> = tuple.iter().map(|t| metric.encode(t.values())).collect();
    Ok(pairwise_similarity(&encoded))
}

fn check_chains(chains: &[HmrChain]) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::InvalidArgument("individual has no chains".into()));
    }
    Ok(())
}

/// Fraction of inputs whose deterministic prediction changes under at
/// least one chain.
pub fn kill_ratio(model: &MlpModel, subset: &LabeledDataset, chains: &[HmrChain]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    check_chains(chains)?;
    let mut killed = 0usize;
    for image in subset.images() {
        let original = model.predict(image)?;
        for chain in chains.iter().filter(|c| !c.is_identity()) {
            if model.predict(&render_chain(chain, image))? != original {
                killed += 1;
                break;
            }
        }
    }
    Ok(killed as f64 / subset.len() as f64)
}

/// Everything the objective functions need besides the individual.
#[derive(Debug, Clone)]
pub struct Objectives<'a> {
    pub model: &'a MlpModel,
    pub config: &'a CoverageConfig,
    pub bank: Option<&'a ReferenceBank>,
    pub metric: SimilarityMetric,
}

impl<'a> Objectives<'a> {
    pub fn new(model: &'a MlpModel, config: &'a CoverageConfig, bank: Option<&'a ReferenceBank>) -> Result<Self> {
        config.validate()?;
        let metric = SimilarityMetric::for_config(config, bank)?;
        if let SimilarityMetric::NormalizedL1 { lo, .. } = &metric {
            if lo.len() != model.hidden_neurons() {
                return Err(Error::LengthMismatch(model.hidden_neurons(), lo.len()));
            }
        }
        Ok(Self {
            model,
            config,
            bank,
            metric,
        })
    }

    /// Objectives of `chains` over `subset`; `feasible` is left false.
    ///
    /// Coverage is taken over the traces of every original input together
    /// with all of its follow-ups.
    pub fn evaluate(&self, subset: &LabeledDataset, chains: &[HmrChain]) -> Result<ObjectiveVector> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        check_chains(chains)?;
        let model = self.model;
        let mut cover = CoverageSet::new(model.hidden_neurons(), self.config.nc_threshold);
        let mut scores = Vec::new();
        let mut similarity = 0.0;
        let mut killed = 0usize;
        for image in subset.images() {
            let original = model.forward(image, None)?;
            let mut outputs: Vec<Option<ForwardOutput>> = Vec::with_capacity(chains.len());
            for chain in chains {
                outputs.push(if chain.is_identity() {
                    None
                } else {
                    Some(model.forward(&render_chain(chain, image), None)?)
                });
            }
            let all = core::iter::once(&original).chain(outputs.iter().map(|o| o.as_ref().unwrap_or(&original)));
            let mut encoded = Vec::with_capacity(chains.len() + 1);
            for out in all {
                match self.config.criterion {
                    CoverageCriterion::Nc => cover.add(out.trace.values())?,
                    CoverageCriterion::Dsa => {
                        let bank = self.bank.ok_or_else(|| Error::InvalidArgument("DSA needs a reference bank".into()))?;
                        scores.push(dsa_score(out.trace.values(), out.predicted(), bank)?);
                    }
                }
                encoded.push(self.metric.encode(out.trace.values()));
            }
            similarity += pairwise_similarity(&encoded);
            let p0 = original.predicted();
            if outputs.iter().flatten().any(|o| o.predicted() != p0) {
                killed += 1;
            }
        }
        let n = subset.len() as f64;
        let coverage = match self.config.criterion {
            CoverageCriterion::Nc => cover.coverage(),
            CoverageCriterion::Dsa => dsa_coverage(&scores, self.config.dsa_buckets, self.config.dsa_upper),
        };
        Ok(ObjectiveVector {
            coverage,
            similarity: similarity / n,
            kill_ratio: killed as f64 / n,
            feasible: false,
        })
    }
}

/// One-shot [`Objectives::evaluate`].
pub fn evaluate(
    model: &MlpModel,
    subset: &LabeledDataset,
    chains: &[HmrChain],
    config: &CoverageConfig,
    bank: Option<&ReferenceBank>,
) -> Result<ObjectiveVector> {
    Objectives::new(model, config, bank)?.evaluate(subset, chains)
}
