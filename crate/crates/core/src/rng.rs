//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by a `u64`
//! seed. Normal variates use `rand_distr::StandardNormal` (ziggurat), uniform
//! variates use the 53-bit `[0, 1)` conversion of `rand`. Both transforms are
//! fixed for a given dependency lock, which is what makes runs bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of ensemble member `index` derived from a base seed.
pub fn member_seed(base_seed: u64, index: usize) -> u64 {
    base_seed ^ index as u64
}

pub fn standard_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal(rng: &mut SimRng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// Uniform on `[0, 1)`.
pub fn unit_uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}
