use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every seeded stream in the crate.
pub type SeededRng = ChaCha8Rng;

/// Recorded in reports and manifests so runs can be reproduced.
pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64)";

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
