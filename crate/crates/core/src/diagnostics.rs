//! Numerical checks of optimality, envelope smoothness and convergence rate.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::driver::IterateRecord;
use crate::error::{Result, SolverError};
use crate::newton::estimate_v;
use crate::oracle::BenchmarkProblem;
use crate::prox::ProxOptions;
use crate::regularizer::{exact_envelope, lipschitz_of_envelope, Regularizer};

/// Residuals of the equivalent optimality conditions at `x`:
/// `prox_shift = ||p(x) - x||`, `grad_norm = ||grad f_phi(x)||`, `value_drop = |f(x) - f(p(x))|`,
/// `envelope_gap = |f(x) - f_phi(x)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub x: Vec<f64>,
    pub prox_shift: f64,
    pub grad_norm: f64,
    pub value_drop: f64,
    pub envelope_gap: f64,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.prox_shift
            .max(self.grad_norm)
            .max(self.value_drop)
            .max(self.envelope_gap)
    }
}

pub fn optimality_report(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    tol: f64,
) -> Result<OptimalityReport> {
    if !(tol > 0.0) {
        return Err(SolverError::invalid("optimality tolerance must be positive"));
    }
    let env = exact_envelope(problem, reg, x, tol * 1e-2)?;
    let fx = problem.value(x);
    Ok(OptimalityReport {
        x: x.as_slice().to_vec(),
        prox_shift: (&env.p - x).norm(),
        grad_norm: env.grad.norm(),
        value_drop: (fx - problem.value(&env.p)).abs(),
        envelope_gap: (fx - env.f_phi).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub bound: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub passed: bool,
}

/// Largest `||g(x) - g(x')|| / ||x - x'||` over `n_pairs` uniform pairs in
/// `[lo, hi]^n`, against `L^2 / (4 beta lambda)`.
pub fn lipschitz_probe<R: Rng>(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    n_pairs: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<LipschitzReport> {
    if n_pairs == 0 || !(hi > lo) {
        return Err(SolverError::invalid(
            "lipschitz probe needs n_pairs >= 1 and a non-empty box",
        ));
    }
    let n = problem.dimension();
    let bound = lipschitz_of_envelope(reg);
    let mut max_ratio = 0.0_f64;
    let mut used = 0;
    let mut skipped = 0;
    for _ in 0..n_pairs {
        let x = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
        let y = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
        let dist = (&x - &y).norm();
        if dist == 0.0 {
            skipped += 1;
            continue;
        }
        let gx = exact_envelope(problem, reg, &x, 1e-10)?.grad;
        let gy = exact_envelope(problem, reg, &y, 1e-10)?.grad;
        max_ratio = max_ratio.max((gx - gy).norm() / dist);
        used += 1;
    }
    Ok(LipschitzReport {
        max_ratio,
        bound,
        pairs_used: used,
        pairs_skipped: skipped,
        passed: max_ratio <= bound * (1.0 + 1e-6),
    })
}

/// Distances at or below this are treated as converged and excluded.
pub const RATE_NOISE_FLOOR: f64 = 1e-12;
/// Minimum number of usable records for a rate estimate.
pub const RATE_MIN_RECORDS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub distances: Vec<f64>,
    /// `ratios_1step[k] = d_{k+1} / d_k`.
    pub ratios_1step: Vec<f64>,
    /// `ratios_2step[k] = d_{k+2} / d_k`.
    pub ratios_2step: Vec<f64>,
    /// Max of the last 3 two-step ratios.
    pub tail_max_2step: f64,
    pub tail_max_1step: f64,
    pub tail_min_1step: f64,
    /// Fit of `d_{k+1} <= C d_k^2` over `d_k` in `[1e-9, 1e-2]`.
    pub quadratic_constant_estimate: Option<f64>,
    /// Free-slope fit of `log d_{k+1}` against `log d_k` on the same range.
    pub order_estimate: Option<f64>,
}

fn tail(v: &[f64], k: usize) -> &[f64] {
    &v[v.len().saturating_sub(k)..]
}

/// Ratios over the leading records whose distance to `x_ref` exceeds the
/// noise floor.
pub fn rate_report(trace: &[IterateRecord], x_ref: &DVector<f64>) -> Result<RateReport> {
    let distances: Vec<f64> = trace
        .iter()
        .map(|r| (DVector::from_column_slice(&r.x) - x_ref).norm())
        .take_while(|&d| d > RATE_NOISE_FLOOR)
        .collect();
    if distances.len() < RATE_MIN_RECORDS {
        return Err(SolverError::InsufficientTrace {
            usable: distances.len(),
            required: RATE_MIN_RECORDS,
        });
    }
    let ratios_1step: Vec<f64> = distances.windows(2).map(|w| w[1] / w[0]).collect();
    let ratios_2step: Vec<f64> = distances.windows(3).map(|w| w[2] / w[0]).collect();
    let fold_max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);

    let pairs: Vec<(f64, f64)> = distances
        .windows(2)
        .filter(|w| (1e-9..=1e-2).contains(&w[0]))
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    let quadratic_constant_estimate =
        (!pairs.is_empty()).then(|| (pairs.iter().map(|(a, b)| b - 2.0 * a).sum::<f64>() / pairs.len() as f64).exp());
    let order_estimate = (pairs.len() >= 2)
        .then(|| {
            let m = pairs.len() as f64;
            let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
            let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
            let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            (sxx > 0.0).then(|| sxy / sxx)
        })
        .flatten();

    Ok(RateReport {
        tail_max_2step: fold_max(tail(&ratios_2step, 3)),
        tail_max_1step: fold_max(tail(&ratios_1step, 3)),
        tail_min_1step: fold_min(tail(&ratios_1step, 3)),
        distances,
        ratios_1step,
        ratios_2step,
        quadratic_constant_estimate,
        order_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdRegularityReport {
    pub min_curvature: f64,
    /// Smallest eigenvalue among the sampled Jacobians.
    pub min_eigenvalue: f64,
    pub samples: usize,
    pub directions_per_sample: usize,
}

/// Samples Jacobian estimates at points within `radius` of `x_ref` and
/// returns the smallest Rayleigh quotient `d^T V d / ||d||^2` over random
/// directions. `radius = 0` probes `x_ref` alone.
pub fn bd_regularity_probe<R: Rng>(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x_ref: &DVector<f64>,
    n_samples: usize,
    radius: f64,
    rng: &mut R,
) -> Result<BdRegularityReport> {
    if n_samples == 0 || !(radius >= 0.0) {
        return Err(SolverError::invalid("bd probe needs n_samples >= 1 and radius >= 0"));
    }
    let n = x_ref.len();
    let directions = 100;
    let samples = if radius == 0.0 { 1 } else { n_samples };
    let mut min_curv = f64::INFINITY;
    let mut min_eig = f64::INFINITY;
    for _ in 0..samples {
        let x = if radius == 0.0 {
            x_ref.clone()
        } else {
            let u: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let scale = radius * rng.random_range(0.0..1.0) / u.norm().max(f64::MIN_POSITIVE);
            x_ref + u * scale
        };
        let est = estimate_v(problem, reg, &x, 1e-12, 1e-5, &ProxOptions::default())?;
        min_eig = min_eig.min(est.v.clone().symmetric_eigenvalues().min());
        for _ in 0..directions {
            let d = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let nd = d.norm_squared();
            if nd > 0.0 {
                min_curv = min_curv.min(d.dot(&(&est.v * &d)) / nd);
            }
        }
    }
    Ok(BdRegularityReport {
        min_curvature: min_curv,
        min_eigenvalue: min_eig,
        samples,
        directions_per_sample: directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{abs_problem, composite_from_data, l1_problem, make_problem_suite};
    use crate::regularizer::quadratic_regularizer;
    use crate::rng::named_rng;
    use nalgebra::DMatrix;

    fn rec(x: f64) -> IterateRecord {
        IterateRecord {
            k: 0,
            x: vec![x],
            eps_k: 1.0,
            f_phi_a: 0.0,
            g_a_norm: 0.0,
            dist_to_ref: None,
            prox_gap: 0.0,
            step: None,
        }
    }

    #[test]
    fn optimality_examples() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let r = optimality_report(&l1_problem(5), &reg, &DVector::zeros(5), 1e-6).unwrap();
        assert!(r.max_residual() <= 1e-9);
        let r = optimality_report(&abs_problem(), &reg, &DVector::from_element(1, 3.0), 1e-6).unwrap();
        // f(3) = 3, p = 2, f(p) = 2, f_phi(3) = 2.5
        assert_eq!(
            (r.prox_shift, r.grad_norm, r.value_drop, r.envelope_gap),
            (1.0, 1.0, 1.0, 0.5)
        );
    }

    #[test]
    fn optimality_at_reference_minimizers() {
        let reg = quadratic_regularizer(1.0).unwrap();
        for p in make_problem_suite() {
            let xbar = p.known_minimizer.clone().unwrap();
            let r = optimality_report(&p, &reg, &xbar, 1e-6).unwrap();
            assert!(r.max_residual() <= 1e-6, "{}: {r:?}", p.name);
        }
    }

    #[test]
    fn huber_lipschitz() {
        let mut rng = named_rng(2, "lip");
        for (lambda, c) in [(1.0, 1.0), (4.0, 0.25)] {
            let reg = quadratic_regularizer(lambda).unwrap();
            let r = lipschitz_probe(&abs_problem(), &reg, 500, -5.0, 5.0, &mut rng).unwrap();
            assert_eq!(r.bound, c);
            assert!(r.passed, "{r:?}");
            assert!(r.max_ratio > 0.9 * c);
        }
        // a degenerate box only produces x = x' pairs
        let reg = quadratic_regularizer(1.0).unwrap();
        let r = lipschitz_probe(&abs_problem(), &reg, 5, 1.0, 1.0 + f64::EPSILON, &mut rng).unwrap();
        assert_eq!(r.pairs_used + r.pairs_skipped, 5);
    }

    #[test]
    fn rate_ratios_and_fit() {
        // d_{k+1} = d_k^2 / 2 starting from 1; the seventh value is below the floor
        let mut d = 1.0;
        let mut trace = Vec::new();
        for _ in 0..7 {
            trace.push(rec(d));
            d = 0.5 * d * d;
        }
        let r = rate_report(&trace, &DVector::zeros(1)).unwrap();
        assert_eq!(r.distances.len(), 6);
        assert_eq!(r.ratios_1step[0], 0.5);
        assert!((r.quadratic_constant_estimate.unwrap() - 0.5).abs() < 1e-9);
        assert!((r.order_estimate.unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(r.tail_max_2step, 0.125 * 0.125);
    }

    #[test]
    fn rate_needs_usable_records() {
        let trace: Vec<_> = (0..10).map(|_| rec(1.0)).collect();
        assert!(matches!(
            rate_report(&trace, &DVector::from_element(1, 1.0)),
            Err(SolverError::InsufficientTrace { usable: 0, .. })
        ));
    }

    #[test]
    fn bd_probe_on_strongly_convex_composite() {
        let mut rng = named_rng(8, "bd");
        let reg = quadratic_regularizer(1.0).unwrap();
        let p = composite_from_data(
            "qi",
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[3.0, -2.5]),
            1.0,
        )
        .unwrap();
        let xbar = p.known_minimizer.clone().unwrap();
        let r = bd_regularity_probe(&p, &reg, &xbar, 5, 1e-3, &mut rng).unwrap();
        // f is smooth near xbar = (2, -1.5) with Hessian I: envelope Jacobian 1/2
        assert!((r.min_eigenvalue - 0.5).abs() < 1e-4, "{r:?}");
        assert!(r.min_curvature > 0.0);
        let single = bd_regularity_probe(&p, &reg, &xbar, 5, 0.0, &mut rng).unwrap();
        assert_eq!(single.samples, 1);
    }
}
