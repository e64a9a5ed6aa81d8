use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::allocate_per_stratum;

/// Hamming-weight strata and the number of masks drawn from each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammingWeightPlan {
    pub weights: Vec<usize>,
    pub per_stratum_counts: Vec<usize>,
    pub total: usize,
}

impl HammingWeightPlan {
    /// Spreads `total` over `weights`, the first `total % |K|` strata taking one extra.
    pub fn even(weights: &[usize], total: usize) -> Result<Self> {
        let per_stratum_counts = allocate_per_stratum(total, weights.len())?;
        Self::explicit(weights, &per_stratum_counts)
    }

    pub fn explicit(weights: &[usize], counts: &[usize]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroStrata);
        }
        if weights.len() != counts.len() {
            return Err(Error::InvalidConfig(format!(
                "{} hamming weights but {} stratum counts",
                weights.len(),
                counts.len()
            )));
        }
        for (i, k) in weights.iter().enumerate() {
            if weights[..i].contains(k) {
                return Err(Error::InvalidConfig(format!("hamming weight {k} listed twice")));
            }
        }
        Ok(HammingWeightPlan {
            weights: weights.to_vec(),
            per_stratum_counts: counts.to_vec(),
            total: counts.iter().sum(),
        })
    }

    pub fn validate(&self, layer_count: usize) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::ZeroStrata);
        }
        if let Some(&k) = self.weights.iter().find(|&&k| k > layer_count) {
            return Err(Error::KExceedsL { k, layer_count });
        }
        if self.per_stratum_counts.iter().sum::<usize>() != self.total {
            return Err(Error::InvalidConfig("stratum counts do not sum to total".into()));
        }
        Ok(())
    }

    pub fn strata(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.weights
            .iter()
            .copied()
            .zip(self.per_stratum_counts.iter().copied())
    }
}

/// How a layer's marginal contribution is formed from a base mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `f(m with l on) - f(m with l off)` for every base mask.
    #[default]
    Force,
    /// `f(m with l on) - f(m)`; zero whenever `l` is already retained in `m`.
    Add,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "force" => Ok(Variant::Force),
            "add" => Ok(Variant::Add),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Force => "force",
            Variant::Add => "add",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Surrogate,
    DirectOracle,
    DirectOracleRaw,
}

/// Estimated per-layer contributions together with how they were sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub phi: Vec<f64>,
    /// Layers ordered from least to most contributing (the pruning order).
    pub ranking: Vec<usize>,
    pub num_mc_samples: usize,
    pub strata_used: HammingWeightPlan,
    pub seed: u64,
    pub variant: Variant,
    pub scorer: ScorerKind,
    pub rng: String,
    pub scorer_calls: u64,
}

impl ShapleyReport {
    pub fn layer_count(&self) -> usize {
        self.phi.len()
    }

    /// Short content hash used to tie pruning plans to the report they came from.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("report serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

/// Layer indices sorted by ascending value, ties broken by ascending index.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match values[a].total_cmp(&values[b]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub removed_layers: Vec<usize>,
    pub remove_count: usize,
    pub report_ref: String,
    pub phi: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_plan_distributes_remainder_first() {
        let plan = HammingWeightPlan::even(&[10, 8, 6], 10).unwrap();
        assert_eq!(plan.per_stratum_counts, vec![4, 3, 3]);
        assert_eq!(plan.total, 10);
        plan.validate(12).unwrap();
    }

    #[test]
    fn plan_rejects_bad_weights() {
        assert!(matches!(HammingWeightPlan::even(&[], 10), Err(Error::ZeroStrata)));
        assert!(HammingWeightPlan::even(&[3, 3], 10).is_err());
        let plan = HammingWeightPlan::even(&[5], 1).unwrap();
        assert!(matches!(plan.validate(4), Err(Error::KExceedsL { k: 5, layer_count: 4 })));
    }

    #[test]
    fn ascending_order_breaks_ties_by_index() {
        assert_eq!(ascending_order(&[0.5, 0.1, 0.9]), vec![1, 0, 2]);
        assert_eq!(ascending_order(&[1.0, 0.0, 1.0, 0.0]), vec![1, 3, 0, 2]);
    }
}
