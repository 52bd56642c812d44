//! Reproducible random streams.
//!
//! Every stochastic step (a DGP draw, a bootstrap resample, an oracle chunk)
//! owns an independent ChaCha12 stream keyed by a 64-bit seed. Child seeds
//! are derived from a parent seed and an index with the SplitMix64 finalizer:
//!
//! ```text
//! child(parent, i) = mix64(parent ^ mix64(i + 0x9E3779B97F4A7C15))
//! key(seed)        = [mix64(seed + k * 0x9E3779B97F4A7C15) for k in 1..=4]  (little-endian)
//! ```
//!
//! Work item `i` only ever reads from stream `child(parent, i)`, so results
//! do not depend on how items are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(GOLDEN)))
}

/// Seed reached by following `path` from `root`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(root, |s, &i| child_seed(s, i))
}

pub type Stream = ChaCha12Rng;

pub fn stream(seed: u64) -> Stream {
    let mut key = [0u8; 32];
    for (k, chunk) in key.chunks_exact_mut(8).enumerate() {
        let word = mix64(seed.wrapping_add(GOLDEN.wrapping_mul(k as u64 + 1)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
