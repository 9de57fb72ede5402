//! Seed derivation.
//!
//! Every random stream (bootstrap draw, node feature sample, fold shuffle) is
//! seeded from its parent seed and a stream number, never from a shared RNG,
//! so results do not depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `stream` under `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix64(parent ^ mix64(stream))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
