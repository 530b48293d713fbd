//! Certified inexact prox evaluations.
//!
//! [`inexact_prox`] returns a point `p_a` whose inner objective
//! `theta(p_a) = f(p_a) + phi(p_a, x) / lambda` is within `epsilon` of
//! `min theta`, together with a lower bound that proves it, the envelope
//! value `theta(p_a)` and the envelope gradient estimate
//! `grad_x phi(p_a, x) / lambda`.

pub mod bundle;
pub mod closed_form;
mod qp;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use bundle::{bundle_minimize, BundleResult, BundleState, Cut};

use crate::error::{Result, SolverError};
use crate::oracle::BenchmarkProblem;
use crate::regularizer::{EnvelopeValue, Regularizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProxBackend {
    /// Closed form when the problem has one, bundle otherwise.
    #[default]
    Auto,
    ClosedForm,
    Bundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendUsed {
    ClosedForm,
    Bundle,
}

pub const DEFAULT_MAX_CUTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxOptions {
    #[serde(rename = "prox_backend")]
    pub backend: ProxBackend,
    pub max_cuts: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            backend: ProxBackend::Auto,
            max_cuts: DEFAULT_MAX_CUTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxCertificate {
    pub p_a: DVector<f64>,
    /// `f(p_a) + phi(p_a, x) / lambda`.
    pub f_phi_a: f64,
    /// `grad_x phi(p_a, x) / lambda`.
    pub g_a: DVector<f64>,
    pub epsilon: f64,
    /// Certified lower bound on the envelope value at `x`.
    pub lower_bound: f64,
    pub backend: BackendUsed,
    pub cuts_used: usize,
    /// The bundle gap stalled at floating-point resolution above `epsilon`;
    /// the certificate then only proves `f_phi_a - lower_bound`.
    pub resolution_limited: bool,
}

impl ProxCertificate {
    pub fn gap(&self) -> f64 {
        self.f_phi_a - self.lower_bound
    }
}

#[allow(clippy::too_many_arguments)]
fn certificate_from_point(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    p: DVector<f64>,
    epsilon: f64,
    lower_bound: Option<f64>,
    backend: BackendUsed,
    cuts_used: usize,
    resolution_limited: bool,
) -> ProxCertificate {
    let f_phi_a = problem.value(&p) + reg.phi(&p, x) / reg.lambda();
    let g_a = reg.envelope_gradient(&p, x);
    ProxCertificate {
        lower_bound: lower_bound.unwrap_or(f_phi_a),
        p_a: p,
        f_phi_a,
        g_a,
        epsilon,
        backend,
        cuts_used,
        resolution_limited,
    }
}

/// Inexact prox at accuracy `epsilon`.
pub fn inexact_prox(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    epsilon: f64,
    opts: &ProxOptions,
) -> Result<ProxCertificate> {
    if !(epsilon > 0.0) {
        return Err(SolverError::invalid(format!(
            "prox epsilon must be positive, got {epsilon}"
        )));
    }
    let n = problem.dimension();
    if x.len() != n {
        return Err(SolverError::invalid(format!(
            "point has dimension {}, problem has {n}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::invalid("non-finite prox center"));
    }
    reg.check_dimension(n)?;

    let use_closed = match opts.backend {
        ProxBackend::Bundle => false,
        ProxBackend::ClosedForm => {
            if !problem.has_closed_form(reg) {
                return Err(SolverError::invalid(format!(
                    "problem '{}' has no closed-form prox for this regularizer",
                    problem.name
                )));
            }
            true
        }
        ProxBackend::Auto => problem.has_closed_form(reg),
    };

    if use_closed {
        let p = problem
            .closed_form_prox(x, reg)
            .ok_or_else(|| SolverError::InternalSolver("closed form unavailable".into()))?;
        return Ok(certificate_from_point(
            problem,
            reg,
            x,
            p,
            epsilon,
            None,
            BackendUsed::ClosedForm,
            0,
            false,
        ));
    }

    let r = bundle_minimize(problem, reg, x, epsilon, opts.max_cuts)?;
    Ok(certificate_from_point(
        problem,
        reg,
        x,
        r.z_best,
        epsilon,
        Some(r.lower_bound),
        BackendUsed::Bundle,
        r.cuts_used,
        r.resolution_limited,
    ))
}

/// One inequality of the inexact-prox error bounds: `value <= bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(value: f64, bound: f64) -> Self {
        BoundCheck {
            value,
            bound,
            slack: bound - value,
            holds: value <= bound,
        }
    }
}

/// The three inexact-prox error bounds, each measured against an exact
/// envelope with its own residual error folded into the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateBounds {
    /// `f_phi(x) <= f_phi_a`
    pub value_lower: BoundCheck,
    /// `f_phi_a <= f_phi(x) + epsilon`
    pub value_upper: BoundCheck,
    /// `||p_a - p|| <= sqrt(lambda eps / beta)`
    pub point: BoundCheck,
    /// `||g_a - g|| <= sqrt(L^2 eps / (beta lambda))`
    pub gradient: BoundCheck,
}

impl CertificateBounds {
    pub fn all_hold(&self) -> bool {
        self.value_lower.holds && self.value_upper.holds && self.point.holds && self.gradient.holds
    }
}

/// Checks the value sandwich, the prox-point bound and the gradient bound
/// for `cert` against `exact`.
pub fn verify_certificate_bounds(
    reg: &Regularizer,
    epsilon: f64,
    exact: &EnvelopeValue,
    cert: &ProxCertificate,
) -> CertificateBounds {
    let lambda = reg.lambda();
    let beta = reg.beta();
    let l2 = reg.lip_l_sq();
    let exact_gap = exact.gap.max(0.0);
    let round = 1e-12 * (1.0 + exact.f_phi.abs());
    let point_bound = |e: f64| (lambda * e / beta).sqrt();
    let grad_bound = |e: f64| (l2 * e / (beta * lambda)).sqrt();

    CertificateBounds {
        value_lower: BoundCheck::new(exact.f_phi - exact_gap, cert.f_phi_a + round),
        value_upper: BoundCheck::new(cert.f_phi_a, exact.f_phi + epsilon + round),
        point: BoundCheck::new(
            (&cert.p_a - &exact.p).norm(),
            point_bound(epsilon) + point_bound(exact_gap) + 1e-12,
        ),
        gradient: BoundCheck::new(
            (&cert.g_a - &exact.grad).norm(),
            grad_bound(epsilon) + grad_bound(exact_gap) + 1e-12,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{abs_problem, make_problem_suite};
    use crate::regularizer::{exact_envelope, quadratic_regularizer};
    use crate::rng::named_rng;
    use rand::Rng;

    fn x1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn bundle_only(max_cuts: usize) -> ProxOptions {
        ProxOptions {
            backend: ProxBackend::Bundle,
            max_cuts,
        }
    }

    #[test]
    fn closed_form_abs_at_three() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let cert = inexact_prox(&abs_problem(), &reg, &x1(3.0), 0.1, &ProxOptions::default()).unwrap();
        assert_eq!(cert.backend, BackendUsed::ClosedForm);
        assert_eq!(cert.p_a[0], 2.0);
        assert_eq!(cert.f_phi_a, 2.5);
        assert_eq!(cert.g_a[0], 1.0);
        assert_eq!(cert.gap(), 0.0);
    }

    #[test]
    fn bundle_abs_within_point_bound() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let cert = inexact_prox(&abs_problem(), &reg, &x1(3.0), 0.1, &bundle_only(10_000)).unwrap();
        assert!((cert.p_a[0] - 2.0).abs() <= 0.2f64.sqrt());
        assert!(cert.gap() <= 0.1);
    }

    #[test]
    fn certificate_invariants_hold_on_suite() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let mut rng = named_rng(9, "cert-invariants");
        for p in make_problem_suite() {
            let n = p.dimension();
            for _ in 0..5 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
                let cert = inexact_prox(&p, &reg, &x, 1e-4, &bundle_only(10_000)).unwrap();
                let theta = p.value(&cert.p_a) + reg.phi(&cert.p_a, &x) / reg.lambda();
                assert_eq!(theta, cert.f_phi_a);
                assert_eq!(cert.g_a, reg.grad_x(&cert.p_a, &x) / reg.lambda());
                assert!(theta <= cert.lower_bound + 1e-4, "{}", p.name);
            }
        }
    }

    #[test]
    fn gradient_small_at_minimizer() {
        let reg = quadratic_regularizer(1.0).unwrap();
        for p in make_problem_suite() {
            let xbar = p.known_minimizer.clone().unwrap();
            for &eps in &[1e-2, 1e-4] {
                let cert = inexact_prox(&p, &reg, &xbar, eps, &bundle_only(10_000)).unwrap();
                let bound = (reg.lip_l_sq() * eps / (reg.beta() * reg.lambda())).sqrt();
                assert!(cert.g_a.norm() <= bound + 1e-9, "{}: {}", p.name, cert.g_a.norm());
            }
        }
    }

    #[test]
    fn work_grows_as_epsilon_shrinks() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let p = crate::oracle::maxq_problem(2);
        let x = DVector::from_column_slice(&[2.0, -1.3]);
        let cuts: Vec<usize> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&e| inexact_prox(&p, &reg, &x, e, &bundle_only(10_000)).unwrap().cuts_used)
            .collect();
        assert!(cuts[0] <= cuts[1] && cuts[1] <= cuts[2], "{cuts:?}");
    }

    #[test]
    fn closed_form_requested_but_missing() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let p = crate::oracle::max_affine_problem(2, 4, 11);
        let opts = ProxOptions {
            backend: ProxBackend::ClosedForm,
            ..ProxOptions::default()
        };
        assert!(inexact_prox(&p, &reg, &DVector::zeros(2), 1e-3, &opts).is_err());
        assert!(inexact_prox(&p, &reg, &DVector::zeros(2), 0.0, &ProxOptions::default()).is_err());
    }

    #[test]
    fn bounds_closed_form_is_tight_and_violation_is_flagged() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let p = abs_problem();
        let x = x1(3.0);
        let exact = exact_envelope(&p, &reg, &x, 1e-10).unwrap();
        let cert = inexact_prox(&p, &reg, &x, 1e-2, &ProxOptions::default()).unwrap();
        let rep = verify_certificate_bounds(&reg, 1e-2, &exact, &cert);
        assert!(rep.all_hold());
        assert_eq!(rep.point.value, 0.0);
        assert_eq!(rep.gradient.value, 0.0);

        let eps = 1e-2;
        let delta = 1.5 * (reg.lambda() * eps / reg.beta()).sqrt();
        let mut bad = cert.clone();
        bad.p_a = &exact.p + x1(delta);
        let rep = verify_certificate_bounds(&reg, eps, &exact, &bad);
        assert!(!rep.point.holds);
    }

    #[test]
    fn strong_convexity_of_inner_objective() {
        // theta(z) - theta(p) >= (beta / lambda) ||z - p||^2
        let reg = quadratic_regularizer(0.7).unwrap();
        let mut rng = named_rng(4, "theta-sc");
        for p in make_problem_suite() {
            if !p.has_closed_form(&reg) {
                continue;
            }
            let n = p.dimension();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let prox_pt = p.closed_form_prox(&x, &reg).unwrap();
            let theta = |z: &DVector<f64>| p.value(z) + reg.phi(z, &x) / reg.lambda();
            for _ in 0..100 {
                let z = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
                let lhs = theta(&z) - theta(&prox_pt);
                let rhs = reg.beta() / reg.lambda() * (&z - &prox_pt).norm_squared();
                assert!(lhs >= rhs - 1e-9, "{}: {lhs} < {rhs}", p.name);
            }
        }
    }
}
