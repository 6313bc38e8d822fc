//! Deterministic splittable random streams.
//!
//! Every stochastic component draws from a counter-based stream derived
//! from `(root seed, path)`, e.g. `(seed, episode, step)`. Streams are
//! independent of execution order, so seeds and Monte Carlo trials can
//! run in parallel without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a path of stream ids.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut acc = splitmix64(root ^ 0xa076_1d64_78bd_642f);
    for &id in path {
        acc = splitmix64(acc ^ splitmix64(id));
    }
    acc
}

/// A fresh generator for the stream identified by `(root, path)`.
pub fn stream(root: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, path))
}
