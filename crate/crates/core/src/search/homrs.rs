use alloc::vec::Vec;

use rand::seq::index;

use super::nsga2::{nsga2, GenerationStats, SubsetEvaluator};
use super::sort::{knee_index, nondominated_sort};
use super::{Individual, SearchConfig};
use crate::error::{Error, Result};
use crate::image::LabeledDataset;
use crate::metrics::{ObjectiveVector, Objectives};
use crate::model::MlpModel;
use crate::rng::stream;
use crate::transforms::{BoundsTable, HmrChain};
use crate::uncertainty::{most_uncertain, ChainGate, UncertaintyConfig, ValidityBound};

const TAG_STEP: u64 = 0x57e9;
const TAG_SUBSET: u64 = 0x5b5e;
const TAG_GATING: u64 = 0x6a7e;

/// Checkpoint of one restart.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    /// Calibration indices the step optimised on.
    pub subset: Vec<usize>,
    /// First front, objectives measured on `subset`.
    pub front: Vec<Individual>,
    pub empty_feasible: bool,
    pub evaluations: usize,
    pub history: Vec<GenerationStats>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionOutcome {
    pub steps: Vec<StepRecord>,
    /// Feasible, mutually non-dominated sets with objectives measured on the
    /// full calibration set.
    pub final_front: Vec<Individual>,
    /// Members of the last step's front that failed re-verification.
    pub rejected: usize,
    pub knee: Option<usize>,
}

impl SelectionOutcome {
    pub fn knee_individual(&self) -> Option<&Individual> {
        self.knee.map(|k| &self.final_front[k])
    }
}

/// Outer selection loop: NSGA-II restarts on shifting calibration subsets,
/// each seeded with the previous front.
///
/// Dropout streams are keyed by `(search.seed, calibration index)`; the
/// validity bound should be built with the same seed and
/// `report_samples` so that the final verification is consistent with it.
#[derive(Debug, Clone)]
pub struct Selector<'a> {
    model: &'a MlpModel,
    calibration: &'a LabeledDataset,
    objectives: Objectives<'a>,
    bound: &'a ValidityBound,
    search: SearchConfig,
    bounds: BoundsTable,
    uncertainty: UncertaintyConfig,
}

impl<'a> Selector<'a> {
    pub fn new(
        objectives: Objectives<'a>,
        calibration: &'a LabeledDataset,
        bound: &'a ValidityBound,
        search: SearchConfig,
        bounds: BoundsTable,
        uncertainty: UncertaintyConfig,
    ) -> Result<Self> {
        if calibration.is_empty() {
            return Err(Error::EmptyDataset);
        }
        search.validate()?;
        bounds.validate()?;
        uncertainty.validate()?;
        Ok(Self {
            model: objectives.model,
            calibration,
            objectives,
            bound,
            search,
            bounds,
            uncertainty,
        })
    }

    pub fn search_config(&self) -> &SearchConfig {
        &self.search
    }

    fn gate(&self, indices: &[usize], n_samples: usize) -> Result<ChainGate<'a>> {
        let calibration = self.calibration;
        let inputs = indices.iter().map(|&i| (i as u64, calibration.image(i))).collect();
        ChainGate::new(
            self.model,
            inputs,
            self.bound,
            n_samples,
            self.search.seed,
            self.uncertainty.tolerance,
        )
    }

    /// Runs restart `step`, seeded with the front of the previous one.
    pub fn run_step(&self, step: usize, previous: Option<&StepRecord>) -> Result<StepRecord> {
        let n = self.calibration.len();
        let size = self.search.subset_size(n);
        let mut subset_rng = stream(self.search.seed, &[TAG_SUBSET, step as u64]);
        let subset = match previous {
            Some(prev) if step > 0 => {
                let chains: Vec<&HmrChain> = prev.front.iter().flat_map(|i| &i.chains).collect();
                most_uncertain(
                    self.model,
                    self.calibration,
                    &chains,
                    self.search.uncertain_fraction,
                    size,
                    self.uncertainty.search_samples,
                    self.search.seed,
                    &mut subset_rng,
                )?
            }
            _ => index::sample(&mut subset_rng, n, size).into_vec(),
        };
        let mut gating = index::sample(
            &mut stream(self.search.seed, &[TAG_GATING, step as u64]),
            n,
            self.search.gating_subsample.min(n),
        )
        .into_vec();
        gating.sort_unstable();
        let gate = self.gate(&gating, self.uncertainty.search_samples)?;
        let mut evaluator = SubsetEvaluator::new(&self.objectives, self.calibration.subset(&subset), Some(gate));
        let init = previous
            .map(|p| p.front.iter().map(|i| Individual::new(i.chains.clone())).collect())
            .unwrap_or_default();
        let out = nsga2(&mut evaluator, &self.search, &self.bounds, init, &[TAG_STEP, step as u64])?;
        Ok(StepRecord {
            step,
            subset,
            front: out.front,
            empty_feasible: out.empty_feasible,
            evaluations: out.evaluations,
            history: out.history,
        })
    }

    /// Objectives and feasibility of each set on the full calibration set,
    /// using the reporting sample count.
    pub fn assess(&self, sets: &[Individual]) -> Result<Vec<Individual>> {
        let all: Vec<usize> = (0..self.calibration.len()).collect();
        let mut gate = self.gate(&all, self.uncertainty.report_samples)?;
        sets.iter()
            .map(|ind| {
                let mut o = self.objectives.evaluate(self.calibration, &ind.chains)?;
                o.feasible = gate.set_feasible(&ind.chains)?;
                Ok(Individual {
                    chains: ind.chains.clone(),
                    objectives: Some(o),
                })
            })
            .collect()
    }

    pub fn run(&self) -> Result<SelectionOutcome> {
        self.resume(Vec::new())
    }

    /// Continues from checkpoints of the first `steps.len()` restarts.
    pub fn resume(&self, mut steps: Vec<StepRecord>) -> Result<SelectionOutcome> {
        if steps.len() > self.search.steps || steps.iter().enumerate().any(|(i, s)| s.step != i) {
            return Err(Error::InvalidArgument("checkpoints do not match the configured steps".into()));
        }
        for step in steps.len()..self.search.steps {
            let record = self.run_step(step, steps.last())?;
            steps.push(record);
        }
        let last = &steps.last().expect("steps >= 1").front;
        let assessed = self.assess(last)?;
        let total = assessed.len();
        let feasible: Vec<Individual> = assessed
            .into_iter()
            .filter(|i| i.objectives.is_some_and(|o| o.feasible))
            .collect();
        let rejected = total - feasible.len();
        let final_front = if feasible.is_empty() {
            feasible
        } else {
            let objs: Vec<ObjectiveVector> = feasible.iter().filter_map(|i| i.objectives).collect();
            nondominated_sort(&objs)[0].iter().map(|&i| feasible[i].clone()).collect()
        };
        let objs: Vec<ObjectiveVector> = final_front.iter().filter_map(|i| i.objectives).collect();
        Ok(SelectionOutcome {
            steps,
            knee: knee_index(&objs),
            final_front,
            rejected,
        })
    }
}
