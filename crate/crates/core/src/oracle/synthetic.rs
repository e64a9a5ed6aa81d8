//! Synthetic verification games with closed-form structure.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::UtilityOracle;
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::record::Direction;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    /// `u(S) = sum_{i in S} w_i`
    Additive,
    /// `u(S) = sum_{i in S} w_i + sum_{i<j in S} J_ij`
    Pairwise,
    /// Perplexity-like loss that grows with the removed layers:
    /// `raw(S) = base_ppl * exp(sharpness * sum_{i not in S} w_i + sum_{i<j not in S} J_ij)`
    Degradation,
}

/// File form of a synthetic game. Missing weights or interactions are
/// generated from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGameSpec {
    pub kind: GameKind,
    pub layer_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_base_ppl")]
    pub base_ppl: f64,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Generated degradation interactions are drawn from `U(0, scale / L^2)`;
    /// defaults to [`MODERATE_INTERACTION_SCALE`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_scale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

pub const MODERATE_INTERACTION_SCALE: f64 = 4.0;
/// Joint removals compound hard enough that scores collapse toward zero once
/// about half the layers are gone.
pub const STEEP_INTERACTION_SCALE: f64 = 48.0;

fn default_base_ppl() -> f64 {
    10.0
}

fn default_sharpness() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticGame {
    kind: GameKind,
    weights: Vec<f64>,
    /// Row-major `L x L`, symmetric, zero diagonal.
    interaction: Vec<f64>,
    base_ppl: f64,
    sharpness: f64,
    seed: u64,
}

impl SyntheticGame {
    pub fn additive(weights: Vec<f64>) -> Result<Self> {
        let l = weights.len();
        Self::build(GameKind::Additive, weights, vec![0.0; l * l], 1.0, 1.0, 0)
    }

    pub fn pairwise(weights: Vec<f64>, interaction: Vec<Vec<f64>>) -> Result<Self> {
        let flat = flatten(&interaction, weights.len())?;
        Self::build(GameKind::Pairwise, weights, flat, 1.0, 1.0, 0)
    }

    pub fn degradation(
        weights: Vec<f64>,
        interaction: Vec<Vec<f64>>,
        base_ppl: f64,
        sharpness: f64,
    ) -> Result<Self> {
        let flat = flatten(&interaction, weights.len())?;
        Self::build(GameKind::Degradation, weights, flat, base_ppl, sharpness, 0)
    }

    /// Random game of the given kind, fully determined by `seed`.
    ///
    /// Additive and pairwise weights are drawn from `U(0.1, 1)`, pairwise
    /// interactions from `U(-0.2, 0.2)`. Degradation games put heavier weight
    /// on the first and last layer and use non-negative interactions so that
    /// removing many layers compounds.
    pub fn random(kind: GameKind, layer_count: usize, seed: u64) -> Self {
        let spec = SyntheticGameSpec {
            kind,
            layer_count,
            weights: None,
            interaction: None,
            base_ppl: default_base_ppl(),
            sharpness: match kind {
                GameKind::Degradation => degradation_sharpness(layer_count),
                _ => 1.0,
            },
            interaction_scale: None,
            seed,
        };
        Self::from_spec(&spec).expect("generated spec is valid")
    }

    /// Degradation game whose scores collapse under deep pruning: stronger
    /// per-layer sharpness (`8 / L`) and compounding interactions
    /// ([`STEEP_INTERACTION_SCALE`]). Raw utilities of near-empty masks reach
    /// the order of `1e8`.
    pub fn steep_degradation(layer_count: usize, seed: u64) -> Self {
        let spec = SyntheticGameSpec {
            kind: GameKind::Degradation,
            layer_count,
            weights: None,
            interaction: None,
            base_ppl: default_base_ppl(),
            sharpness: 8.0 / layer_count as f64,
            interaction_scale: Some(STEEP_INTERACTION_SCALE),
            seed,
        };
        Self::from_spec(&spec).expect("generated spec is valid")
    }

    pub fn from_spec(spec: &SyntheticGameSpec) -> Result<Self> {
        let l = spec.layer_count;
        if l == 0 {
            return Err(Error::InvalidConfig("game needs at least one layer".into()));
        }
        let mut rng = seeded(spec.seed);
        let weights = match &spec.weights {
            Some(w) => w.clone(),
            None => random_weights(spec.kind, l, &mut rng),
        };
        let interaction = match (&spec.interaction, spec.kind) {
            (Some(j), _) => flatten(j, l)?,
            (None, GameKind::Additive) => vec![0.0; l * l],
            (None, kind) => {
                let scale = spec.interaction_scale.unwrap_or(MODERATE_INTERACTION_SCALE);
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidConfig("interaction_scale must be finite and non-negative".into()));
                }
                random_interaction(kind, l, scale, &mut rng)
            }
        };
        Self::build(spec.kind, weights, interaction, spec.base_ppl, spec.sharpness, spec.seed)
    }

    pub fn to_spec(&self) -> SyntheticGameSpec {
        let l = self.weights.len();
        SyntheticGameSpec {
            kind: self.kind,
            layer_count: l,
            weights: Some(self.weights.clone()),
            interaction: Some(self.interaction.chunks(l).map(<[f64]>::to_vec).collect()),
            base_ppl: self.base_ppl,
            sharpness: self.sharpness,
            interaction_scale: None,
            seed: self.seed,
        }
    }

    fn build(
        kind: GameKind,
        weights: Vec<f64>,
        interaction: Vec<f64>,
        base_ppl: f64,
        sharpness: f64,
        seed: u64,
    ) -> Result<Self> {
        let l = weights.len();
        if l == 0 {
            return Err(Error::InvalidConfig("game needs at least one layer".into()));
        }
        if weights.iter().chain(&interaction).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("game parameters must be finite".into()));
        }
        if kind == GameKind::Additive && interaction.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidConfig("additive game has no interactions".into()));
        }
        if kind == GameKind::Degradation && !(base_ppl > 0.0 && sharpness > 0.0) {
            return Err(Error::InvalidConfig("base_ppl and sharpness must be positive".into()));
        }
        Ok(SyntheticGame {
            kind,
            weights,
            interaction,
            base_ppl,
            sharpness,
            seed,
        })
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interaction(&self, i: usize, j: usize) -> f64 {
        self.interaction[i * self.weights.len() + j]
    }

    /// `sum w_i + sum_{i<j} J_ij` over the layers selected by `member`.
    fn group_sum(&self, bits: &[bool], member: bool) -> (f64, f64) {
        let l = bits.len();
        let mut linear = 0.0;
        let mut pairs = 0.0;
        for i in (0..l).filter(|&i| bits[i] == member) {
            linear += self.weights[i];
            let row = &self.interaction[i * l..(i + 1) * l];
            for j in (i + 1..l).filter(|&j| bits[j] == member) {
                pairs += row[j];
            }
        }
        (linear, pairs)
    }
}

impl UtilityOracle for SyntheticGame {
    fn layer_count(&self) -> usize {
        self.weights.len()
    }

    fn direction(&self) -> Direction {
        match self.kind {
            GameKind::Degradation => Direction::Lower,
            _ => Direction::Higher,
        }
    }

    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        mask.ensure_len(self.weights.len())?;
        let bits = mask.bits();
        Ok(match self.kind {
            GameKind::Additive => self.group_sum(bits, true).0,
            GameKind::Pairwise => {
                let (linear, pairs) = self.group_sum(bits, true);
                linear + pairs
            }
            GameKind::Degradation => {
                let (linear, pairs) = self.group_sum(bits, false);
                self.base_ppl * (self.sharpness * linear + pairs).exp()
            }
        })
    }
}

fn flatten(rows: &[Vec<f64>], l: usize) -> Result<Vec<f64>> {
    if rows.len() != l || rows.iter().any(|r| r.len() != l) {
        return Err(Error::DimensionMismatch(format!("interaction matrix must be {l}x{l}")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row[i] != 0.0 {
            return Err(Error::InvalidConfig("interaction diagonal must be zero".into()));
        }
        for (j, &v) in row.iter().enumerate().take(i) {
            if v != rows[j][i] {
                return Err(Error::InvalidConfig("interaction matrix must be symmetric".into()));
            }
        }
    }
    Ok(rows.concat())
}

fn degradation_sharpness(layer_count: usize) -> f64 {
    3.0 / layer_count as f64
}

fn random_weights<R: Rng>(kind: GameKind, l: usize, rng: &mut R) -> Vec<f64> {
    match kind {
        GameKind::Additive | GameKind::Pairwise => (0..l).map(|_| rng.gen_range(0.1..1.0)).collect(),
        GameKind::Degradation => (0..l)
            .map(|i| {
                let w = rng.gen_range(0.2..1.0);
                if l > 2 && (i == 0 || i == l - 1) {
                    3.0 * w
                } else {
                    w
                }
            })
            .collect(),
    }
}

fn random_interaction<R: Rng>(kind: GameKind, l: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let mut j = vec![0.0; l * l];
    for a in 0..l {
        for b in a + 1..l {
            let v = match kind {
                GameKind::Pairwise => rng.gen_range(-0.2..0.2),
                _ => rng.gen_range(0.0..1.0) * scale / (l * l) as f64,
            };
            j[a * l + b] = v;
            j[b * l + a] = v;
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Mask {
        s.parse().unwrap()
    }

    #[test]
    fn additive_and_pairwise_examples() {
        let add = SyntheticGame::additive(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(add.evaluate(&m("111")).unwrap(), 6.0);
        assert_eq!(add.evaluate(&m("000")).unwrap(), 0.0);

        let pw = SyntheticGame::pairwise(vec![1.0, 1.0], vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(pw.evaluate(&m("11")).unwrap(), 4.0);
        assert_eq!(pw.evaluate(&m("10")).unwrap(), 1.0);
    }

    #[test]
    fn degradation_is_perplexity_like() {
        let game = SyntheticGame::degradation(
            vec![1.0, 0.5],
            vec![vec![0.0, 0.25], vec![0.25, 0.0]],
            10.0,
            2.0,
        )
        .unwrap();
        assert_eq!(game.evaluate(&m("11")).unwrap(), 10.0);
        assert!((game.evaluate(&m("01")).unwrap() - 10.0 * 2f64.exp()).abs() < 1e-12);
        assert!((game.evaluate(&m("00")).unwrap() - 10.0 * (3.0f64 + 0.25).exp()).abs() < 1e-9);
        assert_eq!(game.direction(), Direction::Lower);
        assert_eq!(game.baseline_utility().unwrap(), 10.0);
    }

    #[test]
    fn random_games_are_reproducible() {
        for kind in [GameKind::Additive, GameKind::Pairwise, GameKind::Degradation] {
            let a = SyntheticGame::random(kind, 9, 17);
            let b = SyntheticGame::random(kind, 9, 17);
            assert_eq!(a, b);
            assert_ne!(a, SyntheticGame::random(kind, 9, 18));
            let round = SyntheticGame::from_spec(&a.to_spec()).unwrap();
            assert_eq!(round, a);
        }
    }

    #[test]
    fn spec_json_fills_missing_parameters() {
        let spec: SyntheticGameSpec =
            serde_json::from_str(r#"{"kind":"pairwise","layer_count":5,"seed":4}"#).unwrap();
        let game = SyntheticGame::from_spec(&spec).unwrap();
        assert_eq!(game.layer_count(), 5);
        assert_eq!(game.interaction(1, 3), game.interaction(3, 1));
        assert_eq!(game.interaction(2, 2), 0.0);
    }

    #[test]
    fn malformed_interaction_is_rejected() {
        assert!(SyntheticGame::pairwise(vec![1.0, 1.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(SyntheticGame::pairwise(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(SyntheticGame::pairwise(vec![1.0, 1.0], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn steep_preset_compounds_faster() {
        let l = 32;
        let (mild, steep) = (SyntheticGame::random(GameKind::Degradation, l, 3), SyntheticGame::steep_degradation(l, 3));
        for i in 0..l {
            for j in 0..l {
                assert!(steep.interaction(i, j) >= 0.0);
                assert!(steep.interaction(i, j) <= STEEP_INTERACTION_SCALE / (l * l) as f64);
            }
        }
        // same seed, same weight draws; only severity differs
        assert_eq!(mild.weights(), steep.weights());
        let half = Mask::from_u64(l, 0xFFFF);
        assert!(steep.evaluate(&half).unwrap() > 10.0 * mild.evaluate(&half).unwrap());
        assert_eq!(steep.evaluate(&Mask::full(l)).unwrap(), 10.0);
    }

    #[test]
    fn interaction_scale_is_validated() {
        let spec: SyntheticGameSpec =
            serde_json::from_str(r#"{"kind": "degradation", "layer_count": 4, "interaction_scale": -1}"#).unwrap();
        assert!(SyntheticGame::from_spec(&spec).is_err());
    }
}
