//! Seeded inputs shared by the benchmarks.

use dean_core::rng::rng_from;
use dean_core::ProbVec;
use ndarray::Array2;
use rand::Rng;

/// `n` random distributions over `k` classes, skewed toward confident
/// predictions like a trained softmax.
pub fn softmax_like(n: usize, k: usize, seed: u64) -> Vec<ProbVec> {
    let mut rng = rng_from(seed, &[]);
    (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..k).map(|_| 4.0 * rng.gen::<f64>()).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            ProbVec::new(logits.iter().map(|l| l.exp() / z).collect()).expect("normalized")
        })
        .collect()
}

/// Uniform features in `[0, 1)`.
pub fn features(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed, &[]);
    Array2::from_shape_simple_fn((n, dim), || rng.gen())
}
