//! Layer-contribution estimation.
//!
//! The Monte Carlo estimator draws base masks by stratified sampling and, for
//! every layer, averages the change in score when that layer is switched on
//! versus off. All layers share the same base masks. The exact oracle in
//! [`exact`] enumerates every coalition and is the reference for small games.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::oracle::UtilityOracle;
use crate::record::normalize_score;
use crate::rng::RNG_NAME;
use crate::sampler::{sample_stratified, SamplerConfig};
use crate::stats::pairwise_sum;
use crate::surrogate::SurrogateModel;
use crate::types::{ascending_order, HammingWeightPlan, ScorerKind, ShapleyReport, Variant};

mod exact;
mod sweep;

pub use exact::{efficiency_check, exact_shapley, exact_shapley_with_cap, DEFAULT_EXACT_CAP};
pub use sweep::{convergence_sweep, SweepRow};

/// Anything that assigns a score to a coalition mask.
pub trait Scorer: Sync {
    fn layer_count(&self) -> usize;

    fn kind(&self) -> ScorerKind;

    fn score(&self, mask: &Mask) -> Result<f64>;

    /// Writes the marginal delta of every layer for one base mask into `out`
    /// and returns how many scorer evaluations it took.
    fn perturbation_deltas(&self, base: &Mask, variant: Variant, out: &mut [f64]) -> Result<u64> {
        let mut calls = 0;
        let base_score = match variant {
            Variant::Add => {
                calls += 1;
                Some(self.score(base)?)
            }
            Variant::Force => None,
        };
        for (layer, delta) in out.iter_mut().enumerate() {
            *delta = match (variant, base_score) {
                (Variant::Add, Some(_)) if base.is_retained(layer) => 0.0,
                (Variant::Add, Some(s)) => {
                    calls += 1;
                    self.score(&base.with_layer(layer)?)? - s
                }
                _ => {
                    calls += 2;
                    self.score(&base.with_layer(layer)?)? - self.score(&base.without_layer(layer)?)?
                }
            };
        }
        Ok(calls)
    }
}

/// The trained surrogate network as a scorer.
pub struct SurrogateScorer<'a> {
    model: &'a SurrogateModel,
}

impl<'a> SurrogateScorer<'a> {
    pub fn new(model: &'a SurrogateModel) -> Self {
        SurrogateScorer { model }
    }
}

impl Scorer for SurrogateScorer<'_> {
    fn layer_count(&self) -> usize {
        self.model.input_dim()
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Surrogate
    }

    fn score(&self, mask: &Mask) -> Result<f64> {
        self.model.forward(mask)
    }

    fn perturbation_deltas(&self, base: &Mask, variant: Variant, out: &mut [f64]) -> Result<u64> {
        if base.len() != self.model.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} layers, surrogate expects {}",
                base.len(),
                self.model.input_dim()
            )));
        }
        Ok(self.model.perturbation_deltas(base, variant, out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// The oracle's raw utility, unnormalized.
    Raw,
    /// The performance ratio against the full model, in `(0, 1]`.
    Normalized,
}

/// Scores masks by calling a utility oracle directly.
pub struct DirectScorer<O> {
    oracle: O,
    mode: ScoreMode,
    baseline: f64,
}

impl<O: UtilityOracle> DirectScorer<O> {
    pub fn new(oracle: O, mode: ScoreMode) -> Result<Self> {
        let baseline = match mode {
            ScoreMode::Raw => f64::NAN,
            ScoreMode::Normalized => oracle.baseline_utility()?,
        };
        Ok(DirectScorer { oracle, mode, baseline })
    }

    pub fn raw(oracle: O) -> Self {
        DirectScorer {
            oracle,
            mode: ScoreMode::Raw,
            baseline: f64::NAN,
        }
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }
}

impl<O: UtilityOracle> Scorer for DirectScorer<O> {
    fn layer_count(&self) -> usize {
        self.oracle.layer_count()
    }

    fn kind(&self) -> ScorerKind {
        match self.mode {
            ScoreMode::Raw => ScorerKind::DirectOracleRaw,
            ScoreMode::Normalized => ScorerKind::DirectOracle,
        }
    }

    fn score(&self, mask: &Mask) -> Result<f64> {
        mask.ensure_len(self.oracle.layer_count())?;
        let raw = self.oracle.evaluate(mask)?;
        match self.mode {
            ScoreMode::Raw => Ok(raw),
            ScoreMode::Normalized => Ok(normalize_score(raw, self.baseline, self.oracle.direction())?.score),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Number of base masks `Q`, shared by every layer.
    pub mc_samples: usize,
    /// Hamming weights the base masks are stratified over.
    pub strata: Vec<usize>,
    pub seed: u64,
    pub variant: Variant,
}

impl EstimatorConfig {
    pub fn new(mc_samples: usize, strata: &[usize], seed: u64) -> Self {
        EstimatorConfig {
            mc_samples,
            strata: strata.to_vec(),
            seed,
            variant: Variant::Force,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn plan(&self) -> Result<HammingWeightPlan> {
        if self.strata.is_empty() {
            return Err(Error::EmptyStrata);
        }
        HammingWeightPlan::even(&self.strata, self.mc_samples)
    }
}

/// Monte Carlo layer contributions:
/// `phi_l = (1/Q) sum_q [score(m_q with l on) - score(m_q with l off)]`
/// for the force variant, base masks `m_q` drawn by stratified sampling.
///
/// Per-layer sums use pairwise summation over the base masks in draw order,
/// so the result does not depend on the number of worker threads.
pub fn estimate_contributions(scorer: &dyn Scorer, config: &EstimatorConfig) -> Result<ShapleyReport> {
    if config.mc_samples == 0 {
        return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
    }
    let plan = config.plan()?;
    let layer_count = scorer.layer_count();
    let sampler = SamplerConfig::new(layer_count, plan.clone(), config.seed);
    let bases = sample_stratified(&sampler)?;

    let rows = bases
        .par_iter()
        .map(|sampled| {
            let mut deltas = vec![0.0; layer_count];
            let calls = scorer.perturbation_deltas(&sampled.mask, config.variant, &mut deltas)?;
            Ok((deltas, calls))
        })
        .collect::<Result<Vec<_>>>()?;

    let scorer_calls = rows.iter().map(|(_, c)| c).sum();
    let q = rows.len() as f64;
    let mut column = vec![0.0; rows.len()];
    let phi: Vec<f64> = (0..layer_count)
        .map(|layer| {
            for (slot, (deltas, _)) in column.iter_mut().zip(&rows) {
                *slot = deltas[layer];
            }
            pairwise_sum(&column) / q
        })
        .collect();
    if let Some(bad) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite contribution for layer {bad}")));
    }

    Ok(ShapleyReport {
        ranking: ascending_order(&phi),
        phi,
        num_mc_samples: config.mc_samples,
        strata_used: plan,
        seed: config.seed,
        variant: config.variant,
        scorer: scorer.kind(),
        rng: RNG_NAME.into(),
        scorer_calls,
    })
}
