//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and builds a fresh
//! [`ChaCha8Rng`] from it with `SeedableRng::seed_from_u64`. ChaCha8 is a
//! portable, platform-independent stream cipher generator, so a given seed
//! produces the same stream on every target. Independent sub-streams (graph,
//! weights, data of one replicate) are obtained with [`derive_seed`], a
//! SplitMix64 finalizer applied to `base ^ stream`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `base` and a stream index into a new seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
