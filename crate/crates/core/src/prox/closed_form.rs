//! Exact prox maps.
//!
//! All of these solve `min_z f(z) + phi(z, x) / lambda` to machine precision:
//! soft-thresholding for separable l1 terms, a one-dimensional root solve for
//! `max_i z_i^2`, and coordinate descent plus a support polish for the
//! l1-plus-quadratic family.

use nalgebra::{DMatrix, DVector};

use crate::oracle::{polish_support, Objective};
use crate::regularizer::Regularizer;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    sign(v) * (v.abs() - t).max(0.0)
}

pub fn available(objective: &Objective, reg: &Regularizer) -> bool {
    match objective {
        Objective::Abs | Objective::L1 { .. } | Objective::Composite { .. } => true,
        Objective::MaxQ { n } => reg.diagonal(*n).is_some(),
        Objective::MaxAffine { .. } => false,
    }
}

pub fn prox(objective: &Objective, reg: &Regularizer, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.len();
    let lambda = reg.lambda();
    match objective {
        Objective::Abs | Objective::L1 { .. } => match reg.diagonal(n) {
            Some(m) => Some(DVector::from_fn(n, |i, _| soft_threshold(x[i], lambda / m[i]))),
            None => {
                let metric = reg.metric_matrix(n);
                let a = &metric / lambda;
                let c = &a * x;
                Some(l1_quadratic_prox(&a, &c, 1.0))
            }
        },
        Objective::Composite { q, b, mu } => {
            let metric = reg.metric_matrix(n);
            let scaled = &metric / lambda;
            let a = q + &scaled;
            let c = b + &scaled * x;
            Some(l1_quadratic_prox(&a, &c, *mu))
        }
        Objective::MaxQ { .. } => reg.diagonal(n).map(|m| maxq_prox(x, &m, lambda)),
        Objective::MaxAffine { .. } => None,
    }
}

/// `argmin_z max_i z_i^2 + sum_i m_i (z_i - x_i)^2 / (2 lambda)`.
///
/// With `s^2` the value of the max, the problem reduces to minimizing
/// `s^2 + sum_i m_i (|x_i| - s)_+^2 / (2 lambda)` over `s >= 0`, a convex
/// piecewise quadratic whose stationarity condition is linear on each
/// interval between sorted `|x_i|`. Then `z_i = sign(x_i) min(|x_i|, s)`.
pub fn maxq_prox(x: &DVector<f64>, m: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
    let mut s = 0.0;
    let mut sum_ma = 0.0;
    let mut sum_m = 0.0;
    for (k, &i) in order.iter().enumerate() {
        sum_ma += m[i] * x[i].abs();
        sum_m += m[i];
        let cand = sum_ma / (2.0 * lambda + sum_m);
        let upper = x[i].abs();
        let lower = order.get(k + 1).map_or(0.0, |&j| x[j].abs());
        if cand <= upper && cand >= lower {
            s = cand;
            break;
        }
    }
    DVector::from_fn(n, |i, _| sign(x[i]) * x[i].abs().min(s))
}

/// `argmin_z 1/2 z^T A z - c.z + mu ||z||_1` for symmetric positive definite `A`.
///
/// Cyclic coordinate descent to a fixed point, then the active-support
/// linear solve, which is kept only if it passes the optimality check.
pub fn l1_quadratic_prox(a: &DMatrix<f64>, c: &DVector<f64>, mu: f64) -> DVector<f64> {
    let n = c.len();
    let mut z: DVector<f64> = DVector::zeros(n);
    for _ in 0..100_000 {
        let mut moved = 0.0_f64;
        for i in 0..n {
            let mut r = c[i];
            for j in 0..n {
                if j != i {
                    r -= a[(i, j)] * z[j];
                }
            }
            let zi = soft_threshold(r, mu) / a[(i, i)];
            moved = moved.max((zi - z[i]).abs());
            z[i] = zi;
        }
        if moved <= 1e-15 * (1.0 + z.amax()) {
            break;
        }
    }
    polish_support(a, c, mu, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Golden-section search on a unimodal function over `[lo, hi]`.
    fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-12 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    /// Bisection on the sign of a nondecreasing right derivative, started
    /// from a golden-section bracket. Golden section alone stalls near
    /// `sqrt(eps)` in the argument.
    fn minimize_1d<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, right_deriv: D) -> f64 {
        let g = golden(f, -10.0, 10.0);
        let (mut lo, mut hi) = (g - 1e-6, g + 1e-6);
        assert!(right_deriv(lo) < 0.0 && right_deriv(hi) >= 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if right_deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    #[test]
    fn soft_threshold_matches_golden_section() {
        for &(x, lam) in &[(3.0, 1.0), (0.5, 1.0), (-2.5, 0.7), (0.0, 2.0), (-0.3, 0.25)] {
            let p = soft_threshold(x, lam);
            let theta = |z: f64| z.abs() + (z - x) * (z - x) / (2.0 * lam);
            let sign_r = |z: f64| if z >= 0.0 { 1.0 } else { -1.0 };
            let m = minimize_1d(theta, |z| sign_r(z) + (z - x) / lam);
            assert!((p - m).abs() <= 1e-8, "x={x} lam={lam}: {p} vs {m}");
            assert!(theta(p) <= theta(m) + 1e-15);
        }
    }

    #[test]
    fn maxq_1d_matches_golden_section() {
        for &(x, lam) in &[(2.0, 1.0), (-3.0, 0.5), (0.1, 4.0)] {
            let p = maxq_prox(&DVector::from_element(1, x), &DVector::from_element(1, 1.0), lam)[0];
            let theta = |z: f64| z * z + (z - x) * (z - x) / (2.0 * lam);
            let m = minimize_1d(theta, |z| 2.0 * z + (z - x) / lam);
            assert!((p - m).abs() <= 1e-8, "{p} vs {m}");
        }
    }

    #[test]
    fn maxq_2d_matches_grid() {
        let x = DVector::from_column_slice(&[1.5, -0.4]);
        let m = DVector::from_column_slice(&[1.0, 1.0]);
        let p = maxq_prox(&x, &m, 1.0);
        let theta = |z0: f64, z1: f64| (z0 * z0).max(z1 * z1) + ((z0 - 1.5).powi(2) + (z1 + 0.4).powi(2)) / 2.0;
        let tp = theta(p[0], p[1]);
        let mut best = f64::INFINITY;
        for i in 0..=600 {
            for j in 0..=600 {
                best = best.min(theta(-1.0 + 3.0 * i as f64 / 600.0, -1.5 + 3.0 * j as f64 / 600.0));
            }
        }
        assert!(tp <= best + 1e-12);
        // the large coordinate shrinks to s = 1.5 / 3, the small one is untouched
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn l1_quadratic_matches_brute_force_2d() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let c = DVector::from_column_slice(&[1.7, -0.2]);
        let z = l1_quadratic_prox(&a, &c, 0.5);
        let obj = |v: &DVector<f64>| 0.5 * v.dot(&(&a * v)) - c.dot(v) + 0.5 * v.lp_norm(1);
        let oz = obj(&z);
        for i in 0..=400 {
            for j in 0..=400 {
                let v = DVector::from_column_slice(&[-2.0 + 4.0 * i as f64 / 400.0, -2.0 + 4.0 * j as f64 / 400.0]);
                assert!(oz <= obj(&v) + 1e-14);
            }
        }
    }
}
