use serde::{Deserialize, Serialize};

use super::{estimate_contributions, exact_shapley, DirectScorer, EstimatorConfig, ScoreMode};
use crate::error::Result;
use crate::oracle::{NormalizedOracle, UtilityOracle};
use crate::stats::spearman;
use crate::types::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mc_samples: usize,
    pub seed: u64,
    pub spearman: f64,
}

/// Rank agreement between Monte Carlo estimates and exact Shapley values of
/// the same scored game, one row per `(Q, seed)` pair.
pub fn convergence_sweep(
    oracle: &dyn UtilityOracle,
    mode: ScoreMode,
    strata: &[usize],
    q_list: &[usize],
    seeds: &[u64],
    variant: Variant,
) -> Result<Vec<SweepRow>> {
    let exact = match mode {
        ScoreMode::Raw => exact_shapley(oracle)?,
        ScoreMode::Normalized => exact_shapley(&NormalizedOracle::new(oracle)?)?,
    };
    let scorer = DirectScorer::new(oracle, mode)?;
    let mut rows = Vec::with_capacity(q_list.len() * seeds.len());
    for &q in q_list {
        for &seed in seeds {
            let config = EstimatorConfig::new(q, strata, seed).with_variant(variant);
            let report = estimate_contributions(&scorer, &config)?;
            rows.push(SweepRow {
                mc_samples: q,
                seed,
                spearman: spearman(&report.phi, &exact),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GameKind, SyntheticGame};

    #[test]
    fn additive_game_is_always_perfectly_ranked() {
        let game = SyntheticGame::random(GameKind::Additive, 8, 3);
        let rows = convergence_sweep(&game, ScoreMode::Raw, &[2, 5], &[1, 4, 32], &[0, 1, 2], Variant::Force).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|r| r.spearman == 1.0));
    }

    #[test]
    fn pairwise_game_improves_with_samples() {
        let game = SyntheticGame::random(GameKind::Pairwise, 12, 21);
        let strata: Vec<usize> = (0..=12).collect();
        let seeds: Vec<u64> = (0..20).collect();
        let rows = convergence_sweep(&game, ScoreMode::Raw, &strata, &[16, 256, 4096], &seeds, Variant::Force).unwrap();
        let mean_at = |q| {
            let v: Vec<f64> = rows.iter().filter(|r| r.mc_samples == q).map(|r| r.spearman).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_at(16) <= mean_at(256) + 1e-12);
        assert!(mean_at(256) <= mean_at(4096) + 1e-12);
        assert!(mean_at(4096) >= 0.95);
    }

    #[test]
    fn degradation_game_high_q() {
        let game = SyntheticGame::random(GameKind::Degradation, 12, 4);
        let strata: Vec<usize> = (0..=12).collect();
        let seeds: Vec<u64> = (0..20).collect();
        let rows = convergence_sweep(&game, ScoreMode::Normalized, &strata, &[4096], &seeds, Variant::Force).unwrap();
        let rhos: Vec<f64> = rows.iter().map(|r| r.spearman).collect();
        assert!(crate::stats::median(&rhos) >= 0.9, "{rhos:?}");
    }
}
