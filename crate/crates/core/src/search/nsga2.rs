use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use super::operators::{crossover, mutate, random_individual};
use super::sort::{crowding_distance, nondominated_sort};
use super::{Individual, SearchConfig};
use crate::error::Result;
use crate::image::LabeledDataset;
use crate::metrics::{ObjectiveVector, Objectives};
use crate::rng::{stream, StreamRng};
use crate::transforms::{BoundsTable, HmrChain};
use crate::uncertainty::ChainGate;

/// Computes the objective vector, feasibility included, of one chain set.
pub trait Evaluate {
    fn evaluate(&mut self, chains: &[HmrChain]) -> Result<ObjectiveVector>;
}

impl<F: FnMut(&[HmrChain]) -> Result<ObjectiveVector>> Evaluate for F {
    fn evaluate(&mut self, chains: &[HmrChain]) -> Result<ObjectiveVector> {
        self(chains)
    }
}

type SetKey = Vec<Vec<(u8, u64, u64, bool)>>;

/// Objectives on a fixed subset, feasibility from a chain gate (every set
/// is feasible without one). Results are cached per chain set.
#[derive(Debug)]
pub struct SubsetEvaluator<'a> {
    objectives: &'a Objectives<'a>,
    subset: LabeledDataset,
    gate: Option<ChainGate<'a>>,
    cache: BTreeMap<SetKey, ObjectiveVector>,
}

impl<'a> SubsetEvaluator<'a> {
    pub fn new(objectives: &'a Objectives<'a>, subset: LabeledDataset, gate: Option<ChainGate<'a>>) -> Self {
        Self {
            objectives,
            subset,
            gate,
            cache: BTreeMap::new(),
        }
    }

    pub fn subset(&self) -> &LabeledDataset {
        &self.subset
    }
}

impl Evaluate for SubsetEvaluator<'_> {
    fn evaluate(&mut self, chains: &[HmrChain]) -> Result<ObjectiveVector> {
        let key: Vec<_> = chains.iter().map(HmrChain::key).collect();
        if let Some(o) = self.cache.get(&key) {
            return Ok(*o);
        }
        let mut o = self.objectives.evaluate(&self.subset, chains)?;
        o.feasible = match &mut self.gate {
            Some(gate) => gate.set_feasible(chains)?,
            None => true,
        };
        self.cache.insert(key, o);
        Ok(o)
    }
}

/// Population summary after a generation; the best values are over
/// feasible members only.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationStats {
    pub evaluations: usize,
    pub feasible: usize,
    pub best_coverage: Option<f64>,
    pub best_similarity: Option<f64>,
    pub best_kill_ratio: Option<f64>,
}

impl GenerationStats {
    fn of(population: &[Individual], evaluations: usize) -> Self {
        let feasible: Vec<&ObjectiveVector> = population
            .iter()
            .filter_map(|i| i.objectives.as_ref())
            .filter(|o| o.feasible)
            .collect();
        let best = |f: fn(&ObjectiveVector) -> f64, max: bool| {
            feasible
                .iter()
                .map(|o| f(o))
                .reduce(|a, b| if max { a.max(b) } else { a.min(b) })
        };
        Self {
            evaluations,
            feasible: feasible.len(),
            best_coverage: best(|o| o.coverage, true),
            best_similarity: best(|o| o.similarity, false),
            best_kill_ratio: best(|o| o.kill_ratio, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgaOutcome {
    /// Distinct members of the first front.
    pub front: Vec<Individual>,
    /// True when no member of the final population is feasible; `front`
    /// then holds the best infeasible sets.
    pub empty_feasible: bool,
    pub population: Vec<Individual>,
    pub evaluations: usize,
    /// Index 0 describes the initial population.
    pub history: Vec<GenerationStats>,
}

const TAG_PAD: u64 = 0;
const TAG_SELECT: u64 = 1;
const TAG_VARY: u64 = 2;

fn tagged(config: &SearchConfig, tags: &[u64], extra: &[u64]) -> StreamRng {
    let all: Vec<u64> = tags.iter().chain(extra).copied().collect();
    stream(config.seed, &all)
}

fn objectives_of(population: &[Individual]) -> Vec<ObjectiveVector> {
    population
        .iter()
        .map(|i| i.objectives.expect("population is evaluated"))
        .collect()
}

/// Rank and crowding of every member; lower rank, then larger crowding, wins.
fn rank_and_crowding(objs: &[ObjectiveVector]) -> (Vec<usize>, Vec<f64>, Vec<Vec<usize>>) {
    let fronts = nondominated_sort(objs);
    let mut rank = alloc::vec![0; objs.len()];
    let mut crowd = alloc::vec![0.0; objs.len()];
    for (r, front) in fronts.iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(objs, front)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd, fronts)
}

fn tournament(rank: &[usize], crowd: &[f64], rng: &mut StreamRng) -> usize {
    let a = rng.gen_range(0..rank.len());
    let b = rng.gen_range(0..rank.len());
    let better = |x: usize, y: usize| rank[x] < rank[y] || rank[x] == rank[y] && crowd[x] > crowd[y];
    if better(a, b) {
        a
    } else if better(b, a) {
        b
    } else {
        a.min(b)
    }
}

/// Best `size` members by rank, the last admitted front cut by crowding.
fn survivors(union: Vec<Individual>, size: usize) -> Vec<Individual> {
    let objs = objectives_of(&union);
    let fronts = nondominated_sort(&objs);
    let mut keep = Vec::with_capacity(size);
    for front in fronts {
        if keep.len() + front.len() <= size {
            keep.extend(front);
            continue;
        }
        let crowd = crowding_distance(&objs, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(a.cmp(&b)));
        keep.extend(order.into_iter().take(size - keep.len()).map(|p| front[p]));
        break;
    }
    let mut slots: Vec<Option<Individual>> = union.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().expect("kept once")).collect()
}

fn evaluate_all<E: Evaluate + ?Sized>(evaluator: &mut E, population: &mut [Individual], evaluations: &mut usize) -> Result<()> {
    for ind in population.iter_mut().filter(|i| i.objectives.is_none()) {
        ind.objectives = Some(evaluator.evaluate(&ind.chains)?);
        *evaluations += 1;
    }
    Ok(())
}

/// Constrained NSGA-II.
///
/// `init_pop` is truncated or padded with random individuals to the
/// population size; members that already carry objectives are not
/// re-evaluated. The initial evaluations count against
/// `config.evaluations`, and offspring are produced until that budget or
/// `config.max_generations` runs out. `tags` separate the random streams of
/// independent runs sharing a seed.
pub fn nsga2<E: Evaluate + ?Sized>(
    evaluator: &mut E,
    config: &SearchConfig,
    bounds: &BoundsTable,
    init_pop: Vec<Individual>,
    tags: &[u64],
) -> Result<NsgaOutcome> {
    config.validate()?;
    bounds.validate()?;
    let mut population = init_pop;
    population.truncate(config.population);
    let mut pad_rng = tagged(config, tags, &[TAG_PAD]);
    while population.len() < config.population {
        population.push(random_individual(config, bounds, &mut pad_rng));
    }
    let mut evaluations = 0;
    evaluate_all(evaluator, &mut population, &mut evaluations)?;
    let mut history = alloc::vec![GenerationStats::of(&population, evaluations)];

    let mut generation = 0usize;
    while evaluations < config.evaluations && config.max_generations.is_none_or(|g| generation < g) {
        let lambda = config.population.min(config.evaluations - evaluations);
        let (rank, crowd, _) = rank_and_crowding(&objectives_of(&population));
        let mut select_rng = tagged(config, tags, &[TAG_SELECT, generation as u64]);
        let mut offspring = Vec::with_capacity(lambda + 1);
        let mut pair = 0u64;
        while offspring.len() < lambda {
            let a = tournament(&rank, &crowd, &mut select_rng);
            let b = tournament(&rank, &crowd, &mut select_rng);
            let mut rng = tagged(config, tags, &[TAG_VARY, generation as u64, pair]);
            let (c1, c2) = if rng.gen::<f64>() < config.crossover_rate {
                crossover(&population[a], &population[b], &mut rng)
            } else {
                (
                    Individual::new(population[a].chains.clone()),
                    Individual::new(population[b].chains.clone()),
                )
            };
            offspring.push(mutate(&c1, config, bounds, &mut rng));
            offspring.push(mutate(&c2, config, bounds, &mut rng));
            pair += 1;
        }
        offspring.truncate(lambda);
        evaluate_all(evaluator, &mut offspring, &mut evaluations)?;
        population.extend(offspring);
        population = survivors(population, config.population);
        history.push(GenerationStats::of(&population, evaluations));
        generation += 1;
    }

    let objs = objectives_of(&population);
    let fronts = nondominated_sort(&objs);
    let empty_feasible = !objs.iter().any(|o| o.feasible);
    let mut front: Vec<Individual> = Vec::new();
    for &i in &fronts[0] {
        if !front.iter().any(|f| f.key() == population[i].key()) {
            front.push(population[i].clone());
        }
    }
    Ok(NsgaOutcome {
        front,
        empty_feasible,
        population,
        evaluations,
        history,
    })
}
