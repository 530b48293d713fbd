//! Damped Newton directions on the envelope gradient.
//!
//! `V` is a central-difference Jacobian of `x -> g_a(x, eps)` sampled at a
//! point slightly off `x`, symmetrized and projected onto the PSD cone.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::oracle::BenchmarkProblem;
use crate::prox::{inexact_prox, ProxOptions};
use crate::regularizer::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureMode {
    #[default]
    FiniteDifference,
    /// `V = 0`: the direction is a scaled gradient step.
    Zero,
}

/// Step and inner-accuracy policy for the Jacobian differences:
/// `h = max(min_step, sqrt_eps_scale * sqrt(eps))`,
/// `eps_inner = min(eps, inner_safety * h^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdPolicy {
    pub min_step: f64,
    pub sqrt_eps_scale: f64,
    pub inner_safety: f64,
}

impl Default for FdPolicy {
    fn default() -> Self {
        FdPolicy {
            min_step: 1e-5,
            sqrt_eps_scale: 10.0,
            inner_safety: 1e-2,
        }
    }
}

impl FdPolicy {
    pub fn step(&self, eps: f64) -> f64 {
        self.min_step.max(self.sqrt_eps_scale * eps.sqrt())
    }

    pub fn inner_eps(&self, eps: f64, step: f64) -> f64 {
        eps.min(self.inner_safety * step * step)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_step > 0.0 && self.sqrt_eps_scale > 0.0 && self.inner_safety > 0.0) {
            return Err(SolverError::Config("fd policy constants must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEstimate {
    pub v: DMatrix<f64>,
    pub probe_point: DVector<f64>,
    pub fd_step: f64,
    /// Magnitude of the most negative eigenvalue that was clamped to zero.
    pub psd_shift_applied: f64,
    /// The differences were not finite and `V = 0` was used instead.
    pub fallback: bool,
}

impl CurvatureEstimate {
    pub fn zero(x: &DVector<f64>) -> Self {
        let n = x.len();
        CurvatureEstimate {
            v: DMatrix::zeros(n, n),
            probe_point: x.clone(),
            fd_step: 0.0,
            psd_shift_applied: 0.0,
            fallback: false,
        }
    }
}

/// Nearest PSD matrix (Frobenius) to the symmetric part of `a`, and the
/// clamp magnitude.
pub fn psd_projection(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let shift = (-eig.eigenvalues.min()).max(0.0);
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    ((&v + v.transpose()) * 0.5, shift)
}

/// Symmetrized central-difference Jacobian of `g_a(., eps_inner)` at
/// `x + (fd_step / 10) 1 / sqrt(n)`, clamped to PSD.
pub fn estimate_v(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    eps_inner: f64,
    fd_step: f64,
    opts: &ProxOptions,
) -> Result<CurvatureEstimate> {
    if !(fd_step > 0.0) || !(eps_inner > 0.0) {
        return Err(SolverError::invalid("fd_step and eps_inner must be positive"));
    }
    let n = x.len();
    let probe = x.add_scalar(fd_step / 10.0 / (n as f64).sqrt());
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = probe.clone();
        let mut xm = probe.clone();
        xp[j] += fd_step;
        xm[j] -= fd_step;
        let gp = inexact_prox(problem, reg, &xp, eps_inner, opts)?.g_a;
        let gm = inexact_prox(problem, reg, &xm, eps_inner, opts)?.g_a;
        jac.set_column(j, &((gp - gm) / (2.0 * fd_step)));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        warn!("non-finite Jacobian differences at fd_step {fd_step:e}; using V = 0");
        let mut est = CurvatureEstimate::zero(&probe);
        est.fd_step = fd_step;
        est.fallback = true;
        return Ok(est);
    }
    let (v, shift) = psd_projection(&jac);
    Ok(CurvatureEstimate {
        v,
        probe_point: probe,
        fd_step,
        psd_shift_applied: shift,
        fallback: false,
    })
}

/// `d = -(V + alpha I)^{-1} g`.
pub fn direction(v: &DMatrix<f64>, alpha: f64, g: &DVector<f64>) -> Result<DVector<f64>> {
    if !(alpha > 0.0) {
        return Err(SolverError::invalid("alpha must be positive"));
    }
    if g.iter().all(|&c| c == 0.0) {
        return Err(SolverError::invalid("direction requested at a zero gradient"));
    }
    let n = g.len();
    let sys = v + DMatrix::identity(n, n) * alpha;
    let chol =
        Cholesky::new(sys).ok_or_else(|| SolverError::InternalSolver("V + alpha I is not positive definite".into()))?;
    Ok(-chol.solve(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    Constant,
    #[default]
    GradientProportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DampingSchedule {
    pub alpha0: f64,
    pub mode: DampingMode,
    pub kappa: f64,
    pub alpha_min: f64,
}

impl Default for DampingSchedule {
    fn default() -> Self {
        DampingSchedule {
            alpha0: 1.0,
            mode: DampingMode::GradientProportional,
            kappa: 1.0,
            alpha_min: 0.0,
        }
    }
}

impl DampingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) || !(self.kappa > 0.0) || !(self.alpha_min >= 0.0) {
            return Err(SolverError::Config(
                "damping needs alpha0 > 0, kappa > 0, alpha_min >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `alpha_k`, never below the smallest positive normal double.
pub fn next_alpha(sched: &DampingSchedule, g_norm: f64) -> f64 {
    let a = match sched.mode {
        DampingMode::Constant => sched.alpha0,
        DampingMode::GradientProportional => sched.alpha_min.max(sched.kappa * g_norm),
    };
    a.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{abs_problem, composite_from_data};
    use crate::regularizer::quadratic_regularizer;
    use crate::rng::named_rng;
    use rand::Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn quadratic_envelope_hessian() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let p = composite_from_data("quad", q.clone(), DVector::zeros(3), 0.0).unwrap();
        let lambda = 0.7;
        let reg = quadratic_regularizer(lambda).unwrap();
        let est = estimate_v(&p, &reg, &v(&[0.3, -1.0, 2.0]), 1e-12, 1e-4, &ProxOptions::default()).unwrap();
        // Moreau envelope of 1/2 x^T Q x has Hessian Q (I + lambda Q)^{-1}
        let expect = &q * (DMatrix::identity(3, 3) + &q * lambda).try_inverse().unwrap();
        assert!((&est.v - &expect).amax() <= 1e-4, "{}", est.v);
        assert!(est.psd_shift_applied <= 1e-10);
        assert!((&est.v - est.v.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn huber_curvature() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let opts = ProxOptions::default();
        let outside = estimate_v(&abs_problem(), &reg, &v(&[3.0]), 1e-12, 1e-4, &opts).unwrap();
        assert!(outside.v[(0, 0)].abs() < 1e-8);
        let inside = estimate_v(&abs_problem(), &reg, &v(&[0.5]), 1e-12, 1e-4, &opts).unwrap();
        assert!((inside.v[(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn direction_examples() {
        let z = DMatrix::zeros(2, 2);
        assert_eq!(direction(&z, 1.0, &v(&[2.0, -4.0])).unwrap(), v(&[-2.0, 4.0]));
        let d = direction(&DMatrix::from_diagonal(&v(&[1.0, 3.0])), 1.0, &v(&[2.0, 4.0])).unwrap();
        assert!((d - v(&[-1.0, -1.0])).amax() < 1e-15);
        assert!(direction(&z, 0.0, &v(&[1.0, 0.0])).is_err());
        assert!(direction(&z, 1.0, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn direction_is_descent_for_psd_v() {
        let mut rng = named_rng(21, "descent");
        for _ in 0..1000 {
            let n = rng.random_range(1..6);
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
            let vm = &b * b.transpose();
            let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let alpha = 10f64.powf(rng.random_range(-6.0..1.0));
            let d = direction(&vm, alpha, &g).unwrap();
            assert!(g.dot(&d) < 0.0);
        }
    }

    #[test]
    fn psd_projection_clamps() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let (p, shift) = psd_projection(&a);
        assert_eq!(shift, 2.0);
        assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn alpha_schedule() {
        let c = DampingSchedule {
            alpha0: 0.1,
            mode: DampingMode::Constant,
            ..DampingSchedule::default()
        };
        assert_eq!(next_alpha(&c, 5.0), 0.1);
        let gp = DampingSchedule::default();
        assert_eq!(next_alpha(&gp, 1e-3), 1e-3);
        assert_eq!(next_alpha(&gp, 0.0), f64::MIN_POSITIVE);
    }

    #[test]
    fn fd_policy_values() {
        let p = FdPolicy::default();
        assert_eq!(p.step(1e-14), 1e-5);
        assert!((p.step(1e-4) - 0.1).abs() < 1e-15);
        assert_eq!(p.inner_eps(1e-4, 0.1), 1e-4);
        assert!((p.inner_eps(1.0, 1e-5) - 1e-12).abs() < 1e-27);
    }
}
