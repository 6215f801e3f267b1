//! Shared inputs for the criterion benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in [-1, 1).
pub fn values(n: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// A skewed distribution over 256 symbols; larger `power` is more peaked.
pub fn distribution(power: f64, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    let raw: Vec<f64> = (0..256).map(|_| r.gen::<f64>().powf(power)).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|&p| (p / sum) as f32).collect()
}
