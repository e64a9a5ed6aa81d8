//! Scored masks and the performance-ratio normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Lower bound applied to normalized scores.
pub const SCORE_FLOOR: f64 = 1e-6;

/// Whether a raw utility is a loss (perplexity-like) or a gain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Lower,
    Higher,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Lower => "lower",
            Direction::Higher => "higher",
        }
    }

    /// True when `a` is a strictly better raw utility than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Lower => a < b,
            Direction::Higher => a > b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedScore {
    pub score: f64,
    /// The unclamped ratio fell outside `[SCORE_FLOOR, 1]`.
    pub clamped: bool,
}

/// Performance ratio of a pruned model against the full model.
///
/// For a loss such as perplexity this is `baseline / raw`; for a gain it is
/// `raw / baseline`. The ratio is clamped into `[SCORE_FLOOR, 1]` so it stays
/// inside the surrogate's sigmoid range; `clamped` reports when that happened.
pub fn normalize_score(raw: f64, baseline: f64, direction: Direction) -> Result<NormalizedScore> {
    if !(raw > 0.0 && baseline > 0.0) || !raw.is_finite() || !baseline.is_finite() {
        return Err(Error::NonPositiveUtility { raw, baseline });
    }
    let ratio = match direction {
        Direction::Lower => baseline / raw,
        Direction::Higher => raw / baseline,
    };
    let score = ratio.clamp(SCORE_FLOOR, 1.0);
    Ok(NormalizedScore {
        score,
        clamped: score != ratio,
    })
}

/// A mask with its measured raw utility and normalized score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskScoreRecord {
    pub mask: Mask,
    pub raw_utility: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl MaskScoreRecord {
    pub fn new(mask: Mask, raw_utility: f64, score: f64) -> Self {
        MaskScoreRecord {
            mask,
            raw_utility,
            score,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perplexity_ratio() {
        // 14.98 / 29.97
        let s = normalize_score(29.97, 14.98, Direction::Lower).unwrap();
        assert!((s.score - 0.499833166).abs() < 1e-8);
        assert!(!s.clamped);
    }

    #[test]
    fn baseline_maps_to_one() {
        let s = normalize_score(14.98, 14.98, Direction::Lower).unwrap();
        assert_eq!(s.score, 1.0);
        assert!(!s.clamped);
    }

    #[test]
    fn better_than_baseline_is_clamped() {
        let s = normalize_score(7.0, 14.0, Direction::Lower).unwrap();
        assert_eq!(s.score, 1.0);
        assert!(s.clamped);
        let tiny = normalize_score(1e12, 1.0, Direction::Lower).unwrap();
        assert_eq!(tiny.score, SCORE_FLOOR);
        assert!(tiny.clamped);
    }

    #[test]
    fn higher_is_better_direction() {
        let s = normalize_score(3.0, 4.0, Direction::Higher).unwrap();
        assert_eq!(s.score, 0.75);
    }

    #[test]
    fn non_positive_is_rejected() {
        assert!(matches!(
            normalize_score(0.0, 1.0, Direction::Lower),
            Err(Error::NonPositiveUtility { .. })
        ));
        assert!(normalize_score(1.0, -2.0, Direction::Lower).is_err());
        assert!(normalize_score(f64::NAN, 1.0, Direction::Lower).is_err());
    }

    proptest! {
        #[test]
        fn lower_direction_is_monotone(baseline in 0.1f64..100.0, a in 0.1f64..1e4, b in 0.1f64..1e4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = normalize_score(lo, baseline, Direction::Lower).unwrap().score;
            let s_hi = normalize_score(hi, baseline, Direction::Lower).unwrap().score;
            prop_assert!(s_lo >= s_hi);
            prop_assert!(s_hi > 0.0 && s_lo <= 1.0);
        }
    }
}
