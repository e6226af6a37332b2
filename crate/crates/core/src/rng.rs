//! Seeded random sources. Every stochastic routine in the crate draws from a
//! `ChaCha8Rng` so that streams are stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for a pipeline stage: `seed + offset`, wrapping.
pub fn child_seed(seed: u64, offset: u64) -> u64 {
    seed.wrapping_add(offset)
}
