//! Seed derivation and the random generator used everywhere.
//!
//! One master seed governs a run. Sub-seeds come from
//! `derive_seed(parent, stream, index)`, a SplitMix64 finalizer applied to
//! the parent mixed with a stream tag and a counter. The generator is
//! ChaCha8 seeded through `SeedableRng::seed_from_u64`, and Gaussian draws
//! use the ziggurat sampler of `rand_distr::StandardNormal`, so a seed
//! yields the same numbers on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_ROLLOUT: u64 = 1;
pub const STREAM_INPUT: u64 = 2;
pub const STREAM_SYSTEM: u64 = 3;
pub const STREAM_DATA: u64 = 4;
pub const STREAM_VERIFY: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
