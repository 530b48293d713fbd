//! Fixtures shared by the benchmarks.

use nalgebra::DVector;

/// Deterministic, spread-out points in `[-half, half]^n` (a scaled
/// Weyl sequence, so no RNG state leaks into timings).
pub fn grid_points(n: usize, count: usize, half: f64) -> Vec<DVector<f64>> {
    let alpha: Vec<f64> = (0..n).map(|j| ((j + 2) as f64).sqrt().fract()).collect();
    (1..=count)
        .map(|k| DVector::from_fn(n, |j, _| half * (2.0 * (k as f64 * alpha[j]).fract() - 1.0)))
        .collect()
}
