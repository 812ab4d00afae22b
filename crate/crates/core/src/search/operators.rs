use alloc::vec::Vec;

use rand::Rng;

use super::{Individual, SearchConfig};
use crate::transforms::{resample_params, sample_spec, BoundsTable, HmrChain};

/// Single-point crossover on the chain lists. Parents with fewer than two
/// chains are copied unchanged.
pub fn crossover<R: Rng + ?Sized>(p1: &Individual, p2: &Individual, rng: &mut R) -> (Individual, Individual) {
    let shortest = p1.chains.len().min(p2.chains.len());
    if shortest < 2 {
        return (Individual::new(p1.chains.clone()), Individual::new(p2.chains.clone()));
    }
    let cut = rng.gen_range(1..shortest);
    let splice = |a: &Individual, b: &Individual| {
        let mut chains = a.chains[..cut].to_vec();
        chains.extend_from_slice(&b.chains[cut..]);
        Individual::new(chains)
    };
    (splice(p1, p2), splice(p2, p1))
}

/// Mutates every node independently with probability `mutation_rate`; the
/// chain structure is kept.
pub fn mutate<R: Rng + ?Sized>(ind: &Individual, config: &SearchConfig, bounds: &BoundsTable, rng: &mut R) -> Individual {
    let mix = config.mutation_mix;
    let mut out = Individual::new(ind.chains.clone());
    for chain in &mut out.chains {
        for node in chain.nodes_mut() {
            if rng.gen::<f64>() >= config.mutation_rate {
                continue;
            }
            let u = rng.gen::<f64>();
            *node = if u < mix.change {
                resample_params(node, bounds, rng)
            } else if u < mix.change + mix.nullify {
                node.nullified()
            } else {
                sample_spec(None, bounds, rng)
            };
        }
    }
    out
}

/// Chain count uniform in `[1, K]`, each depth uniform in `[1, D]`.
pub fn random_individual<R: Rng + ?Sized>(config: &SearchConfig, bounds: &BoundsTable, rng: &mut R) -> Individual {
    let count = rng.gen_range(1..=config.max_chains);
    let chains = (0..count)
        .map(|_| {
            let depth = rng.gen_range(1..=config.max_depth);
            let nodes = (0..depth).map(|_| sample_spec(None, bounds, rng)).collect();
            HmrChain::new(nodes).expect("depth >= 1")
        })
        .collect();
    Individual::new(chains)
}

pub fn random_sets<R: Rng + ?Sized>(n: usize, config: &SearchConfig, bounds: &BoundsTable, rng: &mut R) -> Vec<Individual> {
    (0..n).map(|_| random_individual(config, bounds, rng)).collect()
}
