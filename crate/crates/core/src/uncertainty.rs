//! Certainty profiles, the validity bound built from sound and noise
//! profiles, per-chain validity gating and uncertainty-driven subset
//! selection.
//!
//! Monte-Carlo streams are keyed by `(seed, input key)`, where the key is the
//! input's index in the calibration set. A chain evaluated on a subset
//! therefore sees the same dropout masks the sound profile saw.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, LabeledDataset};
use crate::model::MlpModel;
use crate::rng::{derive_seed, stream};
use crate::transforms::{render_chain, HmrChain};

/// Monte-Carlo sample counts, threshold grid and validity tolerance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct UncertaintyConfig {
    pub grid_step: f64,
    /// Dropout passes per input while searching.
    pub search_samples: usize,
    /// Dropout passes per input for final verification and reports.
    pub report_samples: usize,
    pub tolerance: f64,
    /// Noise images used for the lower profile; `None` means one per
    /// calibration input.
    pub noise_count: Option<usize>,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            search_samples: 30,
            report_samples: 100,
            tolerance: 0.01,
            noise_count: None,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        ThresholdGrid::uniform(self.grid_step)?;
        if self.search_samples == 0 || self.report_samples == 0 {
            return Err(Error::InvalidArgument("sample counts must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
        }
        if self.noise_count == Some(0) {
            return Err(Error::InvalidArgument("noise_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Increasing certainty thresholds from 0 to 1 inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    points: Vec<f64>,
}

impl ThresholdGrid {
    /// `{0, Δ, 2Δ, …, 1}`; `1/Δ` must be (close to) an integer.
    pub fn uniform(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidArgument(format!("grid step {step} outside (0, 1]")));
        }
        let n = libm::round(1.0 / step);
        if (n * step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("grid step {step} does not divide 1")));
        }
        let n = n as usize;
        Ok(Self {
            points: (0..=n).map(|k| k as f64 / n as f64).collect(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self::uniform(0.01).expect("0.01 divides 1")
    }
}

/// Threshold `t` → fraction of inputs whose certainty is at least `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertaintyProfile {
    grid: ThresholdGrid,
    fractions: Vec<f64>,
}

impl CertaintyProfile {
    pub fn from_certainties(certainties: &[f64], grid: &ThresholdGrid) -> Result<Self> {
        if certainties.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut sorted = certainties.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let fractions = grid
            .points
            .iter()
            .map(|&t| {
                let below = sorted.partition_point(|&c| c < t);
                (n - below) as f64 / n as f64
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            fractions,
        })
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }
}

/// Lower validity curve on the same grid as its source profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityBound {
    grid: ThresholdGrid,
    bound: Vec<f64>,
}

impl ValidityBound {
    pub fn new(grid: ThresholdGrid, bound: Vec<f64>) -> Result<Self> {
        if grid.len() != bound.len() {
            return Err(Error::GridMismatch);
        }
        if bound.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::InvalidArgument("bound values must lie in [0, 1]".into()));
        }
        Ok(Self { grid, bound })
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.bound
    }
}

/// MC-dropout certainty of each `(key, image)`; the stream of an input is
/// `derive_seed(seed, &[key])`.
pub fn certainties<'a>(
    model: &MlpModel,
    inputs: impl IntoIterator<Item = (u64, &'a ImageTensor)>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    inputs
        .into_iter()
        .map(|(key, im)| model.certainty(im, n_samples, derive_seed(seed, &[key])))
        .collect()
}

/// Certainty profile of a whole dataset, inputs keyed by position.
pub fn profile(
    model: &MlpModel,
    data: &LabeledDataset,
    n_samples: usize,
    seed: u64,
    grid: &ThresholdGrid,
) -> Result<CertaintyProfile> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let certs = certainties(model, data.images().iter().enumerate().map(|(i, im)| (i as u64, im)), n_samples, seed)?;
    CertaintyProfile::from_certainties(&certs, grid)
}

/// `C(t) = ½((1 − t³)·u(t) + (1 + t³)·l(t))` with `u` the sound profile and
/// `l` the noise profile.
pub fn lower_bound(sound: &CertaintyProfile, noise: &CertaintyProfile) -> Result<ValidityBound> {
    if sound.grid != noise.grid {
        return Err(Error::GridMismatch);
    }
    let bound = sound
        .grid
        .points
        .iter()
        .zip(sound.fractions.iter().zip(&noise.fractions))
        .map(|(&t, (&u, &l))| {
            let t3 = t * t * t;
            (0.5 * ((1.0 - t3) * u + (1.0 + t3) * l)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(ValidityBound {
        grid: sound.grid.clone(),
        bound,
    })
}

/// True iff the profile stays within `tolerance` below the bound everywhere.
pub fn is_valid(profile: &CertaintyProfile, bound: &ValidityBound, tolerance: f64) -> Result<bool> {
    if profile.grid != bound.grid {
        return Err(Error::GridMismatch);
    }
    Ok(profile
        .fractions
        .iter()
        .zip(&bound.bound)
        .all(|(f, b)| *f >= b - tolerance))
}

/// `n` images of i.i.d. uniform pixels, labelled 0.
pub fn noise_dataset(dims: (usize, usize, usize), n: usize, num_classes: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("noise dataset needs at least one image".into()));
    }
    let (h, w, c) = dims;
    let images = (0..n)
        .map(|i| {
            let mut rng = stream(seed, &[0x401e, i as u64]);
            ImageTensor::from_fn(h, w, c, |_, _, _| rng.gen::<f64>())
        })
        .collect();
    LabeledDataset::new(images, alloc::vec![0; n], num_classes.max(1))
}

/// Validity checker for chains over a fixed set of keyed inputs. Results
/// are cached per chain.
#[derive(Debug, Clone)]
pub struct ChainGate<'a> {
    model: &'a MlpModel,
    inputs: Vec<(u64, &'a ImageTensor)>,
    bound: &'a ValidityBound,
    n_samples: usize,
    seed: u64,
    tolerance: f64,
    cache: BTreeMap<Vec<(u8, u64, u64, bool)>, bool>,
}

impl<'a> ChainGate<'a> {
    pub fn new(
        model: &'a MlpModel,
        inputs: Vec<(u64, &'a ImageTensor)>,
        bound: &'a ValidityBound,
        n_samples: usize,
        seed: u64,
        tolerance: f64,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(Self {
            model,
            inputs,
            bound,
            n_samples,
            seed,
            tolerance,
            cache: BTreeMap::new(),
        })
    }

    pub fn chain_profile(&self, chain: &HmrChain) -> Result<CertaintyProfile> {
        let transformed: Vec<(u64, ImageTensor)> = self
            .inputs
            .iter()
            .map(|(k, im)| (*k, render_chain(chain, im)))
            .collect();
        let certs = certainties(self.model, transformed.iter().map(|(k, im)| (*k, im)), self.n_samples, self.seed)?;
        CertaintyProfile::from_certainties(&certs, self.bound.grid())
    }

    pub fn chain_valid(&mut self, chain: &HmrChain) -> Result<bool> {
        let key = chain.key();
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let valid = is_valid(&self.chain_profile(chain)?, self.bound, self.tolerance)?;
        self.cache.insert(key, valid);
        Ok(valid)
    }

    /// A set is feasible iff every one of its chains is valid.
    pub fn set_feasible(&mut self, chains: &[HmrChain]) -> Result<bool> {
        for chain in chains {
            if !self.chain_valid(chain)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Feasibility of a chain set over `subset`, inputs keyed by position.
pub fn set_feasibility(
    chains: &[HmrChain],
    model: &MlpModel,
    subset: &LabeledDataset,
    bound: &ValidityBound,
    n_samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<bool> {
    let inputs = subset.images().iter().enumerate().map(|(i, im)| (i as u64, im)).collect();
    ChainGate::new(model, inputs, bound, n_samples, seed, tolerance)?.set_feasible(chains)
}

/// Per input, the lowest certainty over every distinct chain (the plain
/// input when `chains` is empty).
pub fn min_chain_certainties(
    model: &MlpModel,
    dataset: &LabeledDataset,
    chains: &[&HmrChain],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut distinct: BTreeMap<Vec<(u8, u64, u64, bool)>, &HmrChain> = BTreeMap::new();
    for c in chains {
        distinct.entry(c.key()).or_insert(c);
    }
    let mut scores = Vec::with_capacity(dataset.len());
    for (i, image) in dataset.images().iter().enumerate() {
        let s = derive_seed(seed, &[i as u64]);
        let mut best = f64::INFINITY;
        let mut plain_done = false;
        if distinct.is_empty() {
            best = model.certainty(image, n_samples, s)?;
        }
        for chain in distinct.values() {
            if chain.is_identity() {
                if plain_done {
                    continue;
                }
                plain_done = true;
                best = best.min(model.certainty(image, n_samples, s)?);
            } else {
                best = best.min(model.certainty(&render_chain(chain, image), n_samples, s)?);
            }
        }
        scores.push(best);
    }
    Ok(scores)
}

/// Picks `⌈p·subset_size⌉` lowest-scoring indices (ties by index), then
/// fills the subset with uniformly drawn remaining indices.
pub fn select_uncertain<R: Rng + ?Sized>(scores: &[f64], p: f64, subset_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("fraction {p} outside [0, 1]")));
    }
    if subset_size > scores.len() {
        return Err(Error::SubsetLargerThanDataset {
            requested: subset_size,
            available: scores.len(),
        });
    }
    let uncertain = (libm::ceil(p * subset_size as f64 - 1e-9) as usize).min(subset_size);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order[..uncertain].to_vec();
    let mut rest: Vec<usize> = order[uncertain..].to_vec();
    rest.sort_unstable();
    rest.shuffle(rng);
    picked.extend_from_slice(&rest[..subset_size - uncertain]);
    Ok(picked)
}

/// Subset of the `p` fraction most uncertain inputs under `chains`, topped
/// up at random from `rng`. Dropout streams come from `mc_seed`.
#[allow(clippy::too_many_arguments)]
pub fn most_uncertain<R: Rng + ?Sized>(
    model: &MlpModel,
    dataset: &LabeledDataset,
    chains: &[&HmrChain],
    p: f64,
    subset_size: usize,
    n_samples: usize,
    mc_seed: u64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if subset_size > dataset.len() {
        return Err(Error::SubsetLargerThanDataset {
            requested: subset_size,
            available: dataset.len(),
        });
    }
    let scores = if p > 0.0 {
        min_chain_certainties(model, dataset, chains, n_samples, mc_seed)?
    } else {
        alloc::vec![0.0; dataset.len()]
    };
    select_uncertain(&scores, p, subset_size, rng)
}
