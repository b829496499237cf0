//! Deterministic, splittable random streams.
//!
//! Every trajectory draws from its own stream keyed by `(run seed, iteration,
//! trajectory index)`, so a batch produces the same samples whether it is
//! generated sequentially or in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The concrete generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a named stream from a root seed and a path of stream labels.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xA5A5_A5A5)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Labels separating the independent uses of a run seed.
pub mod label {
    pub const ROLLOUT: u64 = 1;
    pub const TOPOLOGY: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const ENV: u64 = 4;
    pub const INIT: u64 = 5;
}

/// Sample an index from a (not necessarily normalized) weight vector.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}
