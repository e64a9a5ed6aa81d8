//! Layer pruning as a cooperative game.
//!
//! Layers are players and a retain-mask is a coalition. An oracle scores
//! coalitions, a small surrogate network learns that score from stratified
//! samples, and a Monte Carlo estimator ranks layers by their average
//! marginal contribution under the surrogate. The lowest-ranked layers form
//! the pruning plan.

pub mod error;
pub mod mask;
pub mod oracle;
pub mod pipeline;
pub mod pruner;
pub mod record;
pub mod rng;
pub mod sampler;
pub mod shapley;
pub mod stats;
pub mod surrogate;
pub mod types;

pub use error::{Error, Result};
pub use mask::{mask_from_string, LayerState, Mask};
pub use oracle::{GameKind, SyntheticGame, UtilityOracle};
pub use pruner::{best_pair_search, make_plan, rank_volatility, PairSearch, RankVolatility};
pub use record::{normalize_score, Direction, MaskScoreRecord, NormalizedScore, SCORE_FLOOR};
pub use rng::RNG_NAME;
pub use sampler::{sample_stratified, SampledMask, SamplerConfig};
pub use shapley::{estimate_contributions, exact_shapley, EstimatorConfig, Scorer};
pub use surrogate::{train, SurrogateModel, TrainConfig};
pub use types::{HammingWeightPlan, PruningPlan, ScorerKind, ShapleyReport, Variant};
