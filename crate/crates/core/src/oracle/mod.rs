//! Coalition utility evaluators.
//!
//! An oracle maps a retain-mask to a raw utility: a perplexity-like loss for
//! measured models and the degradation game, a plain gain for the additive and
//! pairwise games. Oracles are read-only after construction and may be called
//! from many threads at once.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::record::{normalize_score, Direction};

mod synthetic;
mod table;

pub use synthetic::{GameKind, SyntheticGame, SyntheticGameSpec, MODERATE_INTERACTION_SCALE, STEEP_INTERACTION_SCALE};
pub use table::{
    format_score_file, load_score_table, parse_score_file, read_score_file, write_score_file, ScoreFile, ScoreFileHeader,
    ScoreTable,
};

pub trait UtilityOracle: Send + Sync {
    fn layer_count(&self) -> usize;

    fn direction(&self) -> Direction;

    /// Raw utility of the coalition encoded by `mask`. Deterministic.
    fn evaluate(&self, mask: &Mask) -> Result<f64>;

    /// Utility of the full model.
    fn baseline_utility(&self) -> Result<f64> {
        self.evaluate(&Mask::full(self.layer_count()))
    }
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for &T {
    fn layer_count(&self) -> usize {
        (**self).layer_count()
    }
    fn direction(&self) -> Direction {
        (**self).direction()
    }
    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        (**self).evaluate(mask)
    }
    fn baseline_utility(&self) -> Result<f64> {
        (**self).baseline_utility()
    }
}

impl<T: UtilityOracle + ?Sized> UtilityOracle for Box<T> {
    fn layer_count(&self) -> usize {
        (**self).layer_count()
    }
    fn direction(&self) -> Direction {
        (**self).direction()
    }
    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        (**self).evaluate(mask)
    }
    fn baseline_utility(&self) -> Result<f64> {
        (**self).baseline_utility()
    }
}

/// Evaluates `mask`, checking its length against the oracle first.
pub fn evaluate(oracle: &dyn UtilityOracle, mask: &Mask) -> Result<f64> {
    mask.ensure_len(oracle.layer_count())?;
    oracle.evaluate(mask)
}

/// `u(S + {layer}) - u(S)` for a coalition that does not yet contain `layer`.
pub fn marginal_contribution(oracle: &dyn UtilityOracle, subset: &Mask, layer: usize) -> Result<f64> {
    subset.ensure_len(oracle.layer_count())?;
    match subset.get(layer) {
        None => Err(Error::IndexOutOfRange {
            index: layer,
            layer_count: subset.len(),
        }),
        Some(true) => Err(Error::LayerAlreadyPresent(layer)),
        Some(false) => Ok(oracle.evaluate(&subset.with_layer(layer)?)? - oracle.evaluate(subset)?),
    }
}

/// Counts every evaluation passed through to the wrapped oracle.
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O: UtilityOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: UtilityOracle> UtilityOracle for CountingOracle<O> {
    fn layer_count(&self) -> usize {
        self.inner.layer_count()
    }
    fn direction(&self) -> Direction {
        self.inner.direction()
    }
    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(mask)
    }
}

/// The game `u1 + u2`. Both games must agree on layer count and direction.
pub struct SumOracle<A, B> {
    a: A,
    b: B,
}

impl<A: UtilityOracle, B: UtilityOracle> SumOracle<A, B> {
    pub fn new(a: A, b: B) -> Result<Self> {
        if a.layer_count() != b.layer_count() {
            return Err(Error::DimensionMismatch(format!(
                "summed games have {} and {} layers",
                a.layer_count(),
                b.layer_count()
            )));
        }
        Ok(SumOracle { a, b })
    }
}

impl<A: UtilityOracle, B: UtilityOracle> UtilityOracle for SumOracle<A, B> {
    fn layer_count(&self) -> usize {
        self.a.layer_count()
    }
    fn direction(&self) -> Direction {
        self.a.direction()
    }
    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        Ok(self.a.evaluate(mask)? + self.b.evaluate(mask)?)
    }
}

/// Presents the normalized performance score of another oracle as a
/// higher-is-better utility. This is the game the surrogate learns.
pub struct NormalizedOracle<O> {
    inner: O,
    baseline: f64,
}

impl<O: UtilityOracle> NormalizedOracle<O> {
    pub fn new(inner: O) -> Result<Self> {
        let baseline = inner.baseline_utility()?;
        Ok(NormalizedOracle { inner, baseline })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }
}

impl<O: UtilityOracle> UtilityOracle for NormalizedOracle<O> {
    fn layer_count(&self) -> usize {
        self.inner.layer_count()
    }
    fn direction(&self) -> Direction {
        Direction::Higher
    }
    fn evaluate(&self, mask: &Mask) -> Result<f64> {
        let raw = self.inner.evaluate(mask)?;
        Ok(normalize_score(raw, self.baseline, self.inner.direction())?.score)
    }
    fn baseline_utility(&self) -> Result<f64> {
        Ok(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> Mask {
        s.parse().unwrap()
    }

    #[test]
    fn evaluate_checks_length() {
        let game = SyntheticGame::additive(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(evaluate(&game, &m("111")).unwrap(), 6.0);
        assert_eq!(evaluate(&game, &m("000")).unwrap(), 0.0);
        assert!(matches!(
            evaluate(&game, &m("11")),
            Err(Error::MaskLengthMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn marginal_examples() {
        let additive = SyntheticGame::additive(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(marginal_contribution(&additive, &m("100"), 2).unwrap(), 3.0);
        assert!(matches!(
            marginal_contribution(&additive, &m("101"), 2),
            Err(Error::LayerAlreadyPresent(2))
        ));

        let pairwise = SyntheticGame::pairwise(vec![0.0, 0.0], vec![vec![0.0, 5.0], vec![5.0, 0.0]]).unwrap();
        assert_eq!(marginal_contribution(&pairwise, &m("10"), 1).unwrap(), 5.0);
    }

    #[test]
    fn degradation_marginal_matches_two_evaluations() {
        use rand::Rng;
        let game = SyntheticGame::random(GameKind::Degradation, 8, 3);
        let mut rng = crate::rng::seeded(11);
        for _ in 0..200 {
            let code: u64 = rng.gen_range(0..256);
            let layer = rng.gen_range(0..8);
            let subset = Mask::from_u64(8, code & !(1 << layer));
            let direct = game.evaluate(&subset.with_layer(layer).unwrap()).unwrap() - game.evaluate(&subset).unwrap();
            // independent re-evaluation on a fresh copy of the game
            let copy = SyntheticGame::from_spec(&game.to_spec()).unwrap();
            let again = copy.evaluate(&subset.with_layer(layer).unwrap()).unwrap() - copy.evaluate(&subset).unwrap();
            let got = marginal_contribution(&game, &subset, layer).unwrap();
            assert_eq!(got, direct);
            assert_eq!(got, again);
        }
    }

    #[test]
    fn counting_and_sum_wrappers() {
        let a = SyntheticGame::additive(vec![1.0, 2.0]).unwrap();
        let b = SyntheticGame::additive(vec![10.0, 20.0]).unwrap();
        let sum = CountingOracle::new(SumOracle::new(&a, &b).unwrap());
        assert_eq!(sum.evaluate(&m("11")).unwrap(), 33.0);
        assert_eq!(sum.evaluate(&m("01")).unwrap(), 22.0);
        assert_eq!(sum.calls(), 2);

        let c = SyntheticGame::additive(vec![1.0]).unwrap();
        assert!(SumOracle::new(&a, &c).is_err());
    }

    #[test]
    fn normalized_view_of_degradation_game() {
        let game = SyntheticGame::random(GameKind::Degradation, 6, 1);
        let view = NormalizedOracle::new(&game).unwrap();
        assert_eq!(view.evaluate(&Mask::full(6)).unwrap(), 1.0);
        let s = view.evaluate(&m("110110")).unwrap();
        let expected = game.baseline_utility().unwrap() / game.evaluate(&m("110110")).unwrap();
        assert!((s - expected).abs() < 1e-15);
        assert!(s > 0.0 && s <= 1.0);
    }
}
