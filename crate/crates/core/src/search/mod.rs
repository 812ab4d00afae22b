//! Evolutionary selection of HMR sets: encoding, genetic operators,
//! constrained NSGA-II and the outer loop with elitist restarts.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::ObjectiveVector;
use crate::transforms::{BoundsTable, HmrChain};

mod homrs;
mod nsga2;
mod operators;
mod sort;

pub use homrs::{SelectionOutcome, Selector, StepRecord};
pub use nsga2::{nsga2, Evaluate, GenerationStats, NsgaOutcome, SubsetEvaluator};
pub use operators::{crossover, mutate, random_individual, random_sets};
pub use sort::{crowding_distance, dominates, knee_index, nondominated_sort};

/// Candidate solution: a set of chains, the branches of one tree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Individual {
    pub chains: Vec<HmrChain>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub objectives: Option<ObjectiveVector>,
}

impl Individual {
    pub fn new(chains: Vec<HmrChain>) -> Self {
        Self {
            chains,
            objectives: None,
        }
    }

    /// Checks the chain budget, chain depth and parameter bounds.
    pub fn validate(&self, config: &SearchConfig, bounds: &BoundsTable) -> Result<()> {
        if self.chains.is_empty() || self.chains.len() > config.max_chains {
            return Err(Error::InvalidChain(format!(
                "{} chains, expected 1..={}",
                self.chains.len(),
                config.max_chains
            )));
        }
        self.chains.iter().try_for_each(|c| c.validate(config.max_depth, bounds))
    }

    pub fn node_count(&self) -> usize {
        self.chains.iter().map(HmrChain::len).sum()
    }

    pub(crate) fn key(&self) -> Vec<Vec<(u8, u64, u64, bool)>> {
        self.chains.iter().map(HmrChain::key).collect()
    }
}

/// Probabilities of the three mutation sub-operators.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MutationMix {
    /// Redraw parameters within bounds, keeping the kind.
    pub change: f64,
    /// Deactivate the node.
    pub nullify: f64,
    /// Replace by a fresh spec of a random kind.
    pub reinit: f64,
}

impl Default for MutationMix {
    fn default() -> Self {
        Self {
            change: 0.7,
            nullify: 0.2,
            reinit: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SearchConfig {
    pub population: usize,
    /// Objective evaluations per NSGA-II run, initial population included.
    pub evaluations: usize,
    /// Optional cap on generations per NSGA-II run.
    pub max_generations: Option<usize>,
    /// Outer restarts.
    pub steps: usize,
    /// Share of each restart subset taken from the most uncertain inputs.
    pub uncertain_fraction: f64,
    /// Subset size as a share of the calibration set.
    pub subset_fraction: f64,
    pub crossover_rate: f64,
    /// Per-node mutation probability.
    pub mutation_rate: f64,
    pub mutation_mix: MutationMix,
    pub max_chains: usize,
    pub max_depth: usize,
    /// Calibration inputs used to gate new chains during a step.
    pub gating_subsample: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population: 50,
            evaluations: 200,
            max_generations: None,
            steps: 5,
            uncertain_fraction: 0.04,
            subset_fraction: 0.10,
            crossover_rate: 0.8,
            mutation_rate: 0.2,
            mutation_mix: MutationMix::default(),
            max_chains: 5,
            max_depth: 3,
            gating_subsample: 64,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("crossover_rate", self.crossover_rate)?;
        unit("mutation_rate", self.mutation_rate)?;
        unit("uncertain_fraction", self.uncertain_fraction)?;
        let MutationMix { change, nullify, reinit } = self.mutation_mix;
        unit("mutation_mix.change", change)?;
        unit("mutation_mix.nullify", nullify)?;
        unit("mutation_mix.reinit", reinit)?;
        if (change + nullify + reinit - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("mutation_mix must sum to 1".into()));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::InvalidArgument("subset_fraction must lie in (0, 1]".into()));
        }
        let positive = [
            ("population", self.population),
            ("steps", self.steps),
            ("max_chains", self.max_chains),
            ("max_depth", self.max_depth),
            ("gating_subsample", self.gating_subsample),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Subset size for a calibration set of `n` inputs (at least one).
    pub fn subset_size(&self, n: usize) -> usize {
        (libm::round(self.subset_fraction * n as f64) as usize).clamp(1, n.max(1))
    }
}
