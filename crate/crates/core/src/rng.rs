//! Seed derivation for reproducible, parallel Monte Carlo.
//!
//! Each replicate gets its own ChaCha stream derived from `(seed, domain, index)`,
//! so results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distinct purposes draw from disjoint key spaces of the same base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Bootstrap = 1,
    Restart = 2,
    Simulation = 3,
    Placebo = 4,
    Layout = 5,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; pure function of its inputs.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream as u64)).wrapping_add(index))
}

/// RNG for replicate `index` of `stream`.
pub fn replicate_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, 0));
    rng.set_stream(index);
    rng
}
