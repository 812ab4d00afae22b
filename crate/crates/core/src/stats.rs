//! Rank statistics for comparing groups of HMR sets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::ObjectiveVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Alternative {
    /// The first sample tends to be larger.
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

/// Largest size of either sample for which the exact null distribution is
/// enumerated.
pub const EXACT_LIMIT: usize = 8;

/// Midranks (1-based) of the pooled sample, ties averaged.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Counts, for every subset of size `n1` of the doubled midranks, the
/// attainable doubled rank sums.
fn rank_sum_counts(doubled: &[u64], n1: usize) -> Vec<f64> {
    let max_sum: u64 = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled sum s.
    let mut counts = vec![vec![0.0f64; max_sum as usize + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &r in doubled {
        for k in (1..=n1).rev() {
            for s in (r as usize..=max_sum as usize).rev() {
                counts[k][s] += counts[k - 1][s - r as usize];
            }
        }
    }
    counts.swap_remove(n1)
}

/// Mann-Whitney U test with midranks for ties. Exact under the
/// permutation null when both samples have at most [`EXACT_LIMIT`] values;
/// otherwise a normal approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;

    if n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT {
        let doubled: Vec<u64> = ranks.iter().map(|r| libm::round(2.0 * r) as u64).collect();
        let counts = rank_sum_counts(&doubled, n1);
        let total: f64 = counts.iter().sum();
        let observed = libm::round(2.0 * r1) as usize;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / total;
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / total;
        let p = match alternative {
            Alternative::Greater => upper,
            Alternative::Less => lower,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        return Ok(MannWhitney { u, p, exact: true });
    }

    let n = (n1 + n2) as f64;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // Every value tied: no evidence either way.
        return Ok(MannWhitney { u, p: 1.0, exact: false });
    }
    let sd = libm::sqrt(var);
    let upper = normal_sf((u - mean - 0.5) / sd);
    let lower = normal_cdf((u - mean + 0.5) / sd);
    let p = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        exact: false,
    })
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            Self::Negligible
        } else if d < 0.33 {
            Self::Small
        } else if d < 0.474 {
            Self::Medium
        } else {
            Self::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Negligible => "negligible",
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

/// `(#{a > b} − #{a < b}) / (|a|·|b|)` over all pairs.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<(f64, Magnitude)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut score = 0i64;
    for x in a {
        for y in b {
            score += (x > y) as i64 - (x < y) as i64;
        }
    }
    let delta = score as f64 / (a.len() * b.len()) as f64;
    Ok((delta, Magnitude::of(delta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Criterion {
    Coverage,
    Similarity,
    KillRatio,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Coverage, Criterion::Similarity, Criterion::KillRatio];

    pub fn name(self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Similarity => "similarity",
            Self::KillRatio => "kill_ratio",
        }
    }

    pub fn of(self, o: &ObjectiveVector) -> f64 {
        match self {
            Self::Coverage => o.coverage,
            Self::Similarity => o.similarity,
            Self::KillRatio => o.kill_ratio,
        }
    }

    /// Direction in which the optimised group is expected to be better.
    pub fn better(self) -> Alternative {
        match self {
            Self::Similarity => Alternative::Less,
            _ => Alternative::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriterionComparison {
    pub criterion: Criterion,
    pub optimized_mean: f64,
    pub optimized_sd: f64,
    pub random_mean: f64,
    pub random_sd: f64,
    pub alternative: Alternative,
    pub u: f64,
    pub p: f64,
    pub delta: f64,
    pub magnitude: Magnitude,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonReport {
    pub optimized_count: usize,
    pub random_count: usize,
    /// Infeasible sets excluded before testing.
    pub discarded_optimized: usize,
    pub discarded_random: usize,
    pub criteria: Vec<CriterionComparison>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, libm::sqrt(var))
}

/// One-sided test per criterion in the direction favouring `optimized`,
/// after dropping infeasible sets from both groups.
pub fn compare(optimized: &[ObjectiveVector], random: &[ObjectiveVector]) -> Result<ComparisonReport> {
    let keep = |g: &[ObjectiveVector]| g.iter().filter(|o| o.feasible).copied().collect::<Vec<_>>();
    let (opt, rnd) = (keep(optimized), keep(random));
    if opt.is_empty() || rnd.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut criteria = Vec::with_capacity(3);
    for c in Criterion::ALL {
        let a: Vec<f64> = opt.iter().map(|o| c.of(o)).collect();
        let b: Vec<f64> = rnd.iter().map(|o| c.of(o)).collect();
        let test = mann_whitney_u(&a, &b, c.better())?;
        let (delta, magnitude) = cliffs_delta(&a, &b)?;
        let (optimized_mean, optimized_sd) = mean_sd(&a);
        let (random_mean, random_sd) = mean_sd(&b);
        criteria.push(CriterionComparison {
            criterion: c,
            optimized_mean,
            optimized_sd,
            random_mean,
            random_sd,
            alternative: c.better(),
            u: test.u,
            p: test.p,
            delta,
            magnitude,
        });
    }
    Ok(ComparisonReport {
        optimized_count: opt.len(),
        random_count: rnd.len(),
        discarded_optimized: optimized.len() - opt.len(),
        discarded_random: random.len() - rnd.len(),
        criteria,
    })
}
