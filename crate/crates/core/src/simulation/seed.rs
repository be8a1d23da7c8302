//! Deterministic seed derivation.
//!
//! Every random stream of an experiment is a ChaCha8 generator seeded with
//!
//! ```text
//! counter = (stream << 32) | (index mod 2^32)
//! seed    = mix64(base_seed + 0x9E3779B97F4A7C15 * (counter + 1))   (wrapping)
//! mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^= z >> 31
//! ```
//!
//! i.e. the `counter`-th output of a SplitMix64 sequence started at
//! `base_seed`. Replica `i` depends only on `(base_seed, i)`, so adding
//! replicas never changes existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent purposes a stream can serve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Dataset = 0,
    Channel = 1,
}

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base_seed: u64, stream: Stream, index: u64) -> u64 {
    let counter = ((stream as u64) << 32) | (index & 0xFFFF_FFFF);
    mix64(base_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(counter.wrapping_add(1))))
}

pub fn stream_rng(base_seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, stream, index))
}
