use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::metrics::ObjectiveVector;

/// Objectives oriented so that larger is better.
fn gains(o: &ObjectiveVector) -> [f64; 3] {
    [o.coverage, -o.similarity, o.kill_ratio]
}

/// Constrained domination: a feasible vector dominates any infeasible one;
/// otherwise Pareto domination on (coverage ↑, similarity ↓, kill ratio ↑).
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    if a.feasible != b.feasible {
        return a.feasible;
    }
    let (ga, gb) = (gains(a), gains(b));
    ga.iter().zip(&gb).all(|(x, y)| x >= y) && ga.iter().zip(&gb).any(|(x, y)| x > y)
}

/// Fast non-dominated sort; fronts list indices in increasing order.
pub fn nondominated_sort(objectives: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front`, in the order given.
pub fn crowding_distance(objectives: &[ObjectiveVector], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let mut dist = vec![0.0; m];
    for k in 0..3 {
        let value = |p: usize| gains(&objectives[front[p]])[k];
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let range = value(order[m - 1]) - value(order[0]);
        if range <= 0.0 {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        for w in 1..m - 1 {
            dist[order[w]] += (value(order[w + 1]) - value(order[w - 1])) / range;
        }
    }
    dist
}

/// Index of the member closest, in Chebyshev distance after min-max
/// normalisation, to the ideal point of `front`. Ties go to the lowest index.
pub fn knee_index(front: &[ObjectiveVector]) -> Option<usize> {
    if front.is_empty() {
        return None;
    }
    let mut best = [f64::NEG_INFINITY; 3];
    let mut worst = [f64::INFINITY; 3];
    for o in front {
        for (k, g) in gains(o).into_iter().enumerate() {
            best[k] = best[k].max(g);
            worst[k] = worst[k].min(g);
        }
    }
    let distance = |o: &ObjectiveVector| {
        gains(o)
            .into_iter()
            .enumerate()
            .map(|(k, g)| {
                let range = best[k] - worst[k];
                if range > 0.0 {
                    (best[k] - g) / range
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    };
    front
        .iter()
        .enumerate()
        .map(|(i, o)| (i, distance(o)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}
