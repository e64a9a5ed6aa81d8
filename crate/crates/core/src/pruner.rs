//! Pruning plans and the layer-interaction diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::oracle::UtilityOracle;
use crate::record::Direction;
use crate::types::{ascending_order, PruningPlan, ShapleyReport};

/// The `remove_count` least-contributing layers, lowest estimate first.
pub fn make_plan(report: &ShapleyReport, remove_count: usize) -> Result<PruningPlan> {
    let layer_count = report.layer_count();
    if remove_count > layer_count {
        return Err(Error::RemoveCountExceedsL {
            requested: remove_count,
            layer_count,
        });
    }
    let order = ascending_order(&report.phi);
    Ok(PruningPlan {
        removed_layers: order[..remove_count].to_vec(),
        remove_count,
        report_ref: report.fingerprint(),
        phi: report.phi.clone(),
    })
}

/// How much worse the model gets when `layer` is dropped from `context`.
fn removal_cost(oracle: &dyn UtilityOracle, context: &Mask, context_utility: f64, layer: usize) -> Result<f64> {
    let without = oracle.evaluate(&context.without_layer(layer)?)?;
    Ok(match oracle.direction() {
        Direction::Lower => without - context_utility,
        Direction::Higher => context_utility - without,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankVolatility {
    pub contexts: Vec<Mask>,
    /// Single-removal cost of every layer from the full model.
    pub full_costs: Vec<f64>,
    /// `delta_rank[c][i]`: rank of layer `i` under context `c` minus its rank
    /// among the same layers in the full model; `None` for layers the
    /// context has already removed. Rank 0 is the cheapest layer to remove.
    pub delta_rank: Vec<Vec<Option<i64>>>,
}

impl RankVolatility {
    pub fn is_all_zero(&self) -> bool {
        self.delta_rank.iter().flatten().flatten().all(|&d| d == 0)
    }
}

/// Ranks the layers still present in each context by single-removal cost and
/// compares against their ranking by cost from the full model.
pub fn rank_volatility(oracle: &dyn UtilityOracle, contexts: &[Mask]) -> Result<RankVolatility> {
    let l = oracle.layer_count();
    let full = Mask::full(l);
    let full_utility = oracle.evaluate(&full)?;
    let full_costs = (0..l)
        .map(|i| removal_cost(oracle, &full, full_utility, i))
        .collect::<Result<Vec<_>>>()?;

    let delta_rank = contexts
        .iter()
        .map(|context| {
            context.ensure_len(l)?;
            let present: Vec<usize> = context.retained().collect();
            let context_utility = oracle.evaluate(context)?;
            let costs = present
                .iter()
                .map(|&i| removal_cost(oracle, context, context_utility, i))
                .collect::<Result<Vec<_>>>()?;
            let reference: Vec<f64> = present.iter().map(|&i| full_costs[i]).collect();
            let rank_now = positions(&ascending_order(&costs));
            let rank_before = positions(&ascending_order(&reference));
            let mut row = vec![None; l];
            for (slot, &layer) in present.iter().enumerate() {
                row[layer] = Some(rank_now[slot] as i64 - rank_before[slot] as i64);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RankVolatility {
        contexts: contexts.to_vec(),
        full_costs,
        delta_rank,
    })
}

/// Inverse permutation: `positions(order)[item] = rank of item`.
fn positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (rank, &item) in order.iter().enumerate() {
        pos[item] = rank;
    }
    pos
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSearch {
    pub direction: Direction,
    /// Exhaustively best pair to delete and the resulting utility.
    pub pair: (usize, usize),
    pub utility: f64,
    /// Delete the best single layer, re-test, delete the next best.
    pub greedy_pair: (usize, usize),
    pub greedy_utility: f64,
    /// The two best layers by single-deletion utility, without re-testing.
    pub static_pair: (usize, usize),
    pub static_utility: f64,
}

impl PairSearch {
    /// The exhaustive pair is strictly better than the re-tested greedy pair.
    pub fn interaction_detected(&self) -> bool {
        self.direction.better(self.utility, self.greedy_utility)
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// First index whose utility is best under `direction`; ties keep the earlier.
fn best_index(direction: Direction, values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if !direction.better(v, b) => best,
        _ => Some((i, v)),
    })
}

/// Compares exhaustive pair deletion with greedy single deletions.
pub fn best_pair_search(oracle: &dyn UtilityOracle) -> Result<PairSearch> {
    let l = oracle.layer_count();
    if l < 2 {
        return Err(Error::LTooSmall(l));
    }
    let direction = oracle.direction();
    let full = Mask::full(l);
    let remove_pair = |a: usize, b: usize| oracle.evaluate(&full.without_layer(a)?.without_layer(b)?);

    let singles = (0..l)
        .map(|i| oracle.evaluate(&full.without_layer(i)?))
        .collect::<Result<Vec<_>>>()?;

    // static: two best singles, ranked once
    let mut by_single: Vec<usize> = (0..l).collect();
    by_single.sort_by(|&a, &b| {
        if direction.better(singles[a], singles[b]) {
            std::cmp::Ordering::Less
        } else if direction.better(singles[b], singles[a]) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    let static_pair = ordered(by_single[0], by_single[1]);
    let static_utility = remove_pair(static_pair.0, static_pair.1)?;

    // greedy: delete the best single, then re-test the rest
    let first = by_single[0];
    let second_round = (0..l)
        .map(|j| if j == first { Ok(None) } else { remove_pair(first, j).map(Some) })
        .collect::<Result<Vec<_>>>()?;
    let (second, greedy_utility) = second_round
        .iter()
        .enumerate()
        .filter_map(|(j, u)| u.map(|u| (j, u)))
        .fold(None, |best: Option<(usize, f64)>, (j, u)| match best {
            Some((_, b)) if !direction.better(u, b) => best,
            _ => Some((j, u)),
        })
        .expect("at least one other layer");

    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (a + 1..l).map(move |b| (a, b))).collect();
    let utilities = pairs
        .par_iter()
        .map(|&(a, b)| remove_pair(a, b))
        .collect::<Result<Vec<_>>>()?;
    let (best, utility) = best_index(direction, utilities.into_iter()).expect("at least one pair");

    Ok(PairSearch {
        direction,
        pair: pairs[best],
        utility,
        greedy_pair: ordered(first, second),
        greedy_utility,
        static_pair,
        static_utility,
    })
}
