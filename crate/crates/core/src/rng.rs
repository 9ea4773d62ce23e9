//! Seed derivation. Every random component draws from a named sub-stream of
//! one base seed so that components stay independently reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 42;

/// Named random sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel,
    Perturbation,
    Measurement,
    Problem,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Channel => 0x6368_616e,
            Stream::Perturbation => 0x7065_7274,
            Stream::Measurement => 0x6d65_6173,
            Stream::Problem => 0x7072_6f62,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ stream.tag()).wrapping_add(index))
}

pub fn stream_rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}
