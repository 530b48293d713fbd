//! Phi-regular functions and the envelope they induce.
//!
//! The admissible family is `phi(z, x) = 1/2 (z - x)^T M (z - x)` with `M`
//! symmetric positive definite; `M = I` is the Moreau-Yosida case. Each
//! instance carries certified constants: `beta` (strong convexity along the
//! difference direction) and `lip_l` (Lipschitz constant of the joint
//! gradient). They are derived from the spectrum of `M` at construction and
//! never estimated afterwards.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::oracle::BenchmarkProblem;
use crate::prox::{self, ProxBackend, ProxOptions};

#[derive(Debug, Clone, PartialEq)]
enum Metric {
    Identity,
    Matrix {
        m: DMatrix<f64>,
        m_inv: DMatrix<f64>,
        diagonal: Option<DVector<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    metric: Metric,
    lambda: f64,
    beta: f64,
    lip_l: f64,
    /// `lip_l^2`, kept exact so that `c` is not polluted by `sqrt(2)^2`.
    lip_l_sq: f64,
}

/// JSON form: `{"type": "quadratic", "lambda": r}` or
/// `{"type": "metric", "lambda": r, "M": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegularizerSpec {
    Quadratic {
        lambda: f64,
    },
    Metric {
        lambda: f64,
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
}

impl RegularizerSpec {
    pub fn build(&self) -> Result<Regularizer> {
        match self {
            RegularizerSpec::Quadratic { lambda } => quadratic_regularizer(*lambda),
            RegularizerSpec::Metric { lambda, m } => {
                let n = m.len();
                if n == 0 || m.iter().any(|row| row.len() != n) {
                    return Err(SolverError::invalid("metric M must be a non-empty square matrix"));
                }
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                metric_regularizer(&mat, *lambda)
            }
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SolverError::invalid(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// `phi(z, x) = 1/2 ||z - x||^2`, `beta = 1/2`, `L = sqrt(2)`.
pub fn quadratic_regularizer(lambda: f64) -> Result<Regularizer> {
    check_lambda(lambda)?;
    Ok(Regularizer {
        metric: Metric::Identity,
        lambda,
        beta: 0.5,
        lip_l: std::f64::consts::SQRT_2,
        lip_l_sq: 2.0,
    })
}

/// `phi(z, x) = 1/2 (z - x)^T M (z - x)`, `beta = mu_min / 2`,
/// `L = sqrt(2) mu_max`.
pub fn metric_regularizer(m: &DMatrix<f64>, lambda: f64) -> Result<Regularizer> {
    check_lambda(lambda)?;
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(SolverError::invalid("metric M must be square and non-empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::invalid("metric M has non-finite entries"));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(SolverError::invalid("metric M is not symmetric"));
    }
    let m = (m + m.transpose()) * 0.5;
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| SolverError::invalid("metric M is not positive definite (Cholesky failed)"))?;
    let eig = SymmetricEigen::new(m.clone());
    let mu_min = eig.eigenvalues.min();
    let mu_max = eig.eigenvalues.max();
    if mu_min <= 0.0 {
        return Err(SolverError::invalid("metric M is not positive definite"));
    }
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    let diagonal = is_diag.then(|| m.diagonal());
    Ok(Regularizer {
        metric: Metric::Matrix {
            m_inv: chol.inverse(),
            m,
            diagonal,
        },
        lambda,
        beta: mu_min / 2.0,
        lip_l: std::f64::consts::SQRT_2 * mu_max,
        lip_l_sq: 2.0 * mu_max * mu_max,
    })
}

impl Regularizer {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lip_l(&self) -> f64 {
        self.lip_l
    }

    pub fn lip_l_sq(&self) -> f64 {
        self.lip_l_sq
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.metric, Metric::Identity)
    }

    /// Same metric, different `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Regularizer> {
        check_lambda(lambda)?;
        Ok(Regularizer { lambda, ..self.clone() })
    }

    /// Dimension the metric is tied to; `None` for the identity.
    pub fn dimension(&self) -> Option<usize> {
        match &self.metric {
            Metric::Identity => None,
            Metric::Matrix { m, .. } => Some(m.nrows()),
        }
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        match self.dimension() {
            Some(d) if d != n => Err(SolverError::invalid(format!(
                "regularizer metric has dimension {d}, problem has {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// Diagonal of `M` when `M` is diagonal (all ones for the identity).
    pub fn diagonal(&self, n: usize) -> Option<DVector<f64>> {
        match &self.metric {
            Metric::Identity => Some(DVector::from_element(n, 1.0)),
            Metric::Matrix { diagonal, .. } => diagonal.clone(),
        }
    }

    /// Dense `M` at dimension `n`.
    pub fn metric_matrix(&self, n: usize) -> DMatrix<f64> {
        match &self.metric {
            Metric::Identity => DMatrix::identity(n, n),
            Metric::Matrix { m, .. } => m.clone(),
        }
    }

    pub fn apply_metric(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => u.clone(),
            Metric::Matrix { m, .. } => m * u,
        }
    }

    pub fn apply_inverse_metric(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Metric::Identity => v.clone(),
            Metric::Matrix { m_inv, .. } => m_inv * v,
        }
    }

    pub fn phi(&self, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let u = z - x;
        0.5 * u.dot(&self.apply_metric(&u))
    }

    pub fn grad_z(&self, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.apply_metric(&(z - x))
    }

    pub fn grad_x(&self, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        -self.apply_metric(&(z - x))
    }

    /// Envelope gradient at `x` induced by a prox point `p`: `grad_x(p, x) / lambda`.
    pub fn envelope_gradient(&self, p: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.grad_x(p, x) / self.lambda
    }
}

/// `c = L^2 / (4 beta lambda)`, the Lipschitz constant of the envelope gradient.
pub fn lipschitz_of_envelope(reg: &Regularizer) -> f64 {
    reg.lip_l_sq / (4.0 * reg.beta * reg.lambda)
}

/// Envelope value, prox point and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeValue {
    pub f_phi: f64,
    pub p: DVector<f64>,
    pub grad: DVector<f64>,
    /// Certified objective gap of `p` in the inner problem (0 for closed forms).
    pub gap: f64,
}

/// Default accuracy of [`exact_envelope`] on bundle-backed problems.
pub const EXACT_BUNDLE_TOL: f64 = 1e-9;
/// Default accuracy of [`exact_envelope`] when a closed form exists.
pub const EXACT_CLOSED_FORM_TOL: f64 = 1e-10;

/// Ground-truth envelope: closed-form prox when the problem has one, else
/// the bundle backend at accuracy `tol`.
pub fn exact_envelope(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    tol: f64,
) -> Result<EnvelopeValue> {
    if !(tol > 0.0) {
        return Err(SolverError::invalid("envelope tolerance must be positive"));
    }
    let opts = ProxOptions {
        backend: ProxBackend::Auto,
        ..ProxOptions::default()
    };
    let cert = prox::inexact_prox(problem, reg, x, tol, &opts)?;
    Ok(EnvelopeValue {
        f_phi: cert.f_phi_a,
        grad: cert.g_a.clone(),
        gap: cert.f_phi_a - cert.lower_bound,
        p: cert.p_a,
    })
}

/// Outcome of checking the phi-regular axioms on random samples.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AxiomReport {
    pub samples: usize,
    /// Worst `-phi(z,x)` and worst `|phi(z,z)|`.
    pub nonnegativity_violation: f64,
    pub diagonal_violation: f64,
    /// Worst amount by which the strong-convexity inequality fails.
    pub strong_convexity_violation: f64,
    /// Worst amount by which the gradient Lipschitz inequality fails.
    pub lipschitz_violation: f64,
    /// Worst `||grad_z + grad_x||`.
    pub antisymmetry_violation: f64,
    /// Worst relative error of analytic partial gradients vs central differences.
    pub fd_relative_error: f64,
    pub slack: f64,
    pub fd_tolerance: f64,
    pub passed: bool,
}

fn uniform_point<R: Rng>(rng: &mut R, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

/// Checks nonnegativity with diagonal zero, strong convexity with `beta`,
/// gradient Lipschitz with `L`, antisymmetry of the partial gradients and
/// finite-difference agreement, on `samples` random quadruples in
/// `[-5, 5]^n`.
pub fn axiom_report<R: Rng>(
    reg: &Regularizer,
    n: usize,
    samples: usize,
    slack: f64,
    fd_tolerance: f64,
    rng: &mut R,
) -> AxiomReport {
    let mut nonneg = 0.0_f64;
    let mut diag = 0.0_f64;
    let mut sc = 0.0_f64;
    let mut lip = 0.0_f64;
    let mut anti = 0.0_f64;
    let mut fd_err = 0.0_f64;
    let h = 1e-5;

    for _ in 0..samples {
        let z = uniform_point(rng, n, 5.0);
        let x = uniform_point(rng, n, 5.0);
        let z2 = uniform_point(rng, n, 5.0);
        let x2 = uniform_point(rng, n, 5.0);

        let phi = reg.phi(&z, &x);
        nonneg = nonneg.max(-phi);
        if z != x && phi <= 0.0 {
            nonneg = nonneg.max(f64::INFINITY);
        }
        diag = diag.max(reg.phi(&z, &z).abs());

        let gz = reg.grad_z(&z, &x);
        let gx = reg.grad_x(&z, &x);
        let gz2 = reg.grad_z(&z2, &x2);
        let gx2 = reg.grad_x(&z2, &x2);
        let dz = &z2 - &z;
        let dx = &x2 - &x;
        let diff = &dz - &dx;

        let lhs = reg.phi(&z2, &x2) - phi;
        let rhs = gz.dot(&dz) + gx.dot(&dx) + reg.beta() * diff.norm_squared();
        sc = sc.max(rhs - lhs);

        let joint = ((&gz2 - &gz).norm_squared() + (&gx2 - &gx).norm_squared()).sqrt();
        lip = lip.max(joint - reg.lip_l() * diff.norm());

        anti = anti.max((&gz + &gx).norm());

        let mut fd_z = DVector::zeros(n);
        let mut fd_x = DVector::zeros(n);
        for i in 0..n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            fd_z[i] = (reg.phi(&zp, &x) - reg.phi(&zm, &x)) / (2.0 * h);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd_x[i] = (reg.phi(&z, &xp) - reg.phi(&z, &xm)) / (2.0 * h);
        }
        let scale = gz.norm().max(1e-8);
        fd_err = fd_err
            .max((&fd_z - &gz).norm() / scale)
            .max((&fd_x - &gx).norm() / scale);
    }

    let passed =
        nonneg <= slack && diag <= slack && sc <= slack && lip <= slack && anti <= slack && fd_err <= fd_tolerance;
    AxiomReport {
        samples,
        nonnegativity_violation: nonneg,
        diagonal_violation: diag,
        strong_convexity_violation: sc,
        lipschitz_violation: lip,
        antisymmetry_violation: anti,
        fd_relative_error: fd_err,
        slack,
        fd_tolerance,
        passed,
    }
}
