//! Convex objectives and the benchmark problem library.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::prox::closed_form;
use crate::regularizer::Regularizer;
use crate::rng::named_rng;

/// A finite convex function with one subgradient per point.
///
/// Implementations must be immutable after construction.
pub trait ConvexOracle: Send + Sync {
    fn dimension(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    /// One element of the subdifferential at `x`.
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Checked evaluation of value and subgradient.
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if x.len() != self.dimension() {
            return Err(SolverError::invalid(format!(
                "point has dimension {}, oracle expects {}",
                x.len(),
                self.dimension()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::invalid("non-finite point"));
        }
        Ok((self.value(x), self.subgradient(x)))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The objective families shipped with the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `|x|` on the real line.
    Abs,
    /// `||x||_1`.
    L1 { n: usize },
    /// `max_i x_i^2`.
    MaxQ { n: usize },
    /// `max_j (a_j . x + b_j)`; rows of `slopes` are the `a_j`.
    MaxAffine {
        slopes: DMatrix<f64>,
        offsets: DVector<f64>,
    },
    /// `1/2 x^T Q x - b . x + mu ||x||_1`.
    Composite { q: DMatrix<f64>, b: DVector<f64>, mu: f64 },
}

impl Objective {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Objective::Abs => ProblemKind::Abs,
            Objective::L1 { .. } => ProblemKind::L1,
            Objective::MaxQ { .. } => ProblemKind::Maxq,
            Objective::MaxAffine { .. } => ProblemKind::MaxAffine,
            Objective::Composite { .. } => ProblemKind::Composite,
        }
    }

    /// Index of the first maximizing affine piece.
    fn active_piece(slopes: &DMatrix<f64>, offsets: &DVector<f64>, x: &DVector<f64>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..slopes.nrows() {
            let v = slopes.row(j).transpose().dot(x) + offsets[j];
            if v > best.1 {
                best = (j, v);
            }
        }
        best
    }
}

impl ConvexOracle for Objective {
    fn dimension(&self) -> usize {
        match self {
            Objective::Abs => 1,
            Objective::L1 { n } | Objective::MaxQ { n } => *n,
            Objective::MaxAffine { slopes, .. } => slopes.ncols(),
            Objective::Composite { b, .. } => b.len(),
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Objective::Abs | Objective::L1 { .. } => x.lp_norm(1),
            Objective::MaxQ { .. } => x.iter().map(|v| v * v).fold(f64::NEG_INFINITY, f64::max),
            Objective::MaxAffine { slopes, offsets } => Self::active_piece(slopes, offsets, x).1,
            Objective::Composite { q, b, mu } => 0.5 * x.dot(&(q * x)) - b.dot(x) + mu * x.lp_norm(1),
        }
    }

    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Objective::Abs | Objective::L1 { .. } => x.map(sign),
            Objective::MaxQ { n } => {
                let mut best = 0;
                for i in 1..*n {
                    if x[i] * x[i] > x[best] * x[best] {
                        best = i;
                    }
                }
                let mut s = DVector::zeros(*n);
                s[best] = 2.0 * x[best];
                s
            }
            Objective::MaxAffine { slopes, offsets } => {
                let (j, _) = Self::active_piece(slopes, offsets, x);
                slopes.row(j).transpose()
            }
            Objective::Composite { q, b, mu } => q * x - b + x.map(sign) * *mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Abs,
    L1,
    Maxq,
    MaxAffine,
    Composite,
}

/// An objective plus what is known about its minimizer.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub objective: Objective,
    pub known_minimizer: Option<DVector<f64>>,
    pub known_minimum: Option<f64>,
    /// How the minimizer was obtained when it is not analytic.
    pub reference_solver_spec: Option<String>,
}

impl BenchmarkProblem {
    pub fn dimension(&self) -> usize {
        self.objective.dimension()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x)
    }

    /// Exact minimizer of `f(z) + phi(z, x) / lambda` when this problem and
    /// regularizer admit one.
    pub fn closed_form_prox(&self, x: &DVector<f64>, reg: &Regularizer) -> Option<DVector<f64>> {
        closed_form::prox(&self.objective, reg, x)
    }

    pub fn has_closed_form(&self, reg: &Regularizer) -> bool {
        closed_form::available(&self.objective, reg)
    }

    pub fn to_document(&self) -> ProblemDocument {
        let parameters = match &self.objective {
            Objective::Abs | Objective::L1 { .. } | Objective::MaxQ { .. } => serde_json::json!({}),
            Objective::MaxAffine { slopes, offsets } => serde_json::json!({
                "slopes": rows(slopes),
                "offsets": offsets.as_slice(),
            }),
            Objective::Composite { q, b, mu } => serde_json::json!({
                "Q": rows(q),
                "b": b.as_slice(),
                "mu": mu,
            }),
        };
        ProblemDocument {
            name: self.name.clone(),
            dimension: self.dimension(),
            kind: self.objective.kind(),
            parameters,
            known_minimizer: self.known_minimizer.as_ref().map(|v| v.as_slice().to_vec()),
            known_minimum: self.known_minimum,
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(SolverError::invalid(format!(
            "{what} must be a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Serialized problem definition:
/// `{name, dimension, kind, parameters, known_minimizer?, known_minimum?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub name: String,
    pub dimension: usize,
    pub kind: ProblemKind,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_minimizer: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_minimum: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaxAffineParams {
    slopes: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeParams {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    mu: f64,
}

impl ProblemDocument {
    /// Builds the problem, filling in a reference minimizer when the
    /// document carries none.
    pub fn build(&self) -> Result<BenchmarkProblem> {
        let n = self.dimension;
        if n == 0 {
            return Err(SolverError::invalid("dimension must be positive"));
        }
        let params = |v: &serde_json::Value| -> serde_json::Value {
            if v.is_null() {
                serde_json::json!({})
            } else {
                v.clone()
            }
        };
        let objective = match self.kind {
            ProblemKind::Abs => {
                if n != 1 {
                    return Err(SolverError::invalid("abs problem is one-dimensional"));
                }
                Objective::Abs
            }
            ProblemKind::L1 => Objective::L1 { n },
            ProblemKind::Maxq => Objective::MaxQ { n },
            ProblemKind::MaxAffine => {
                let p: MaxAffineParams = serde_json::from_value(params(&self.parameters))
                    .map_err(|e| SolverError::Config(format!("max_affine parameters: {e}")))?;
                let slopes = matrix_from_rows(&p.slopes, "slopes")?;
                if slopes.ncols() != n || p.offsets.len() != slopes.nrows() {
                    return Err(SolverError::invalid("max_affine slopes/offsets do not match dimension"));
                }
                Objective::MaxAffine {
                    slopes,
                    offsets: DVector::from_vec(p.offsets),
                }
            }
            ProblemKind::Composite => {
                let p: CompositeParams = serde_json::from_value(params(&self.parameters))
                    .map_err(|e| SolverError::Config(format!("composite parameters: {e}")))?;
                let q = matrix_from_rows(&p.q, "Q")?;
                if q.nrows() != n || q.ncols() != n || p.b.len() != n {
                    return Err(SolverError::invalid("composite Q/b do not match dimension"));
                }
                if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) || Cholesky::new(q.clone()).is_none() {
                    return Err(SolverError::invalid("composite Q must be symmetric positive definite"));
                }
                if !(p.mu >= 0.0) {
                    return Err(SolverError::invalid("composite mu must be nonnegative"));
                }
                Objective::Composite {
                    q,
                    b: DVector::from_vec(p.b),
                    mu: p.mu,
                }
            }
        };
        if let Some(m) = &self.known_minimizer {
            if m.len() != n {
                return Err(SolverError::invalid("known_minimizer has wrong dimension"));
            }
        }
        let mut problem = BenchmarkProblem {
            name: self.name.clone(),
            objective,
            known_minimizer: self.known_minimizer.clone().map(DVector::from_vec),
            known_minimum: self.known_minimum,
            reference_solver_spec: None,
        };
        match (&problem.known_minimizer, problem.known_minimum) {
            (None, _) => attach_reference(&mut problem)?,
            (Some(xbar), None) => problem.known_minimum = Some(problem.value(xbar)),
            (Some(_), Some(_)) => {}
        }
        Ok(problem)
    }
}

/// Fills `known_minimizer`/`known_minimum`, analytically where possible and
/// with a high-accuracy reference solver otherwise. Computed once and cached
/// in the problem.
fn attach_reference(problem: &mut BenchmarkProblem) -> Result<()> {
    let n = problem.dimension();
    match &problem.objective {
        Objective::Abs | Objective::L1 { .. } | Objective::MaxQ { .. } => {
            problem.known_minimizer = Some(DVector::zeros(n));
            problem.known_minimum = Some(0.0);
        }
        Objective::MaxAffine { slopes, offsets } => {
            let (x, v) = max_affine_vertex_minimizer(slopes, offsets)?;
            problem.known_minimizer = Some(x);
            problem.known_minimum = Some(v);
            problem.reference_solver_spec =
                Some("exact vertex enumeration of the epigraph LP min t s.t. t >= a_j.x + b_j".into());
        }
        Objective::Composite { q, b, mu } => {
            let x = composite_reference(q, b, *mu, 1e-12)?;
            problem.known_minimum = Some(problem.objective.value(&x));
            problem.known_minimizer = Some(x);
            problem.reference_solver_spec =
                Some("accelerated proximal-gradient run to step tolerance 1e-12, support-polished".into());
        }
    }
    Ok(())
}

/// Minimizes a max-affine function by enumerating every vertex of its
/// epigraph: each set of `n + 1` pieces defines a candidate `(x, t)` with all
/// of them equal to `t`. Returns the feasible candidate with the lowest `t`.
///
/// Exponential in the number of pieces; meant for the small instances in the
/// suite.
pub fn max_affine_vertex_minimizer(slopes: &DMatrix<f64>, offsets: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (m, n) = slopes.shape();
    if m < n + 1 {
        return Err(SolverError::invalid(
            "max-affine needs at least n+1 pieces to be bounded below",
        ));
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut idx: Vec<usize> = (0..=n).collect();
    loop {
        // unknowns (x, t): a_j . x - t = -b_j
        let sys = DMatrix::from_fn(n + 1, n + 1, |r, c| if c < n { slopes[(idx[r], c)] } else { -1.0 });
        let rhs = DVector::from_fn(n + 1, |r, _| -offsets[idx[r]]);
        if let Some(sol) = sys.lu().solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                let x = sol.rows(0, n).into_owned();
                let t = sol[n];
                let fx = Objective::active_piece(slopes, offsets, &x).1;
                if fx <= t + 1e-9 * (1.0 + t.abs()) && best.as_ref().is_none_or(|(_, bt)| fx < *bt) {
                    best = Some((x, fx));
                }
            }
        }
        // next combination
        let mut i = n + 1;
        loop {
            if i == 0 {
                return best.ok_or_else(|| SolverError::invalid("max-affine function is unbounded below"));
            }
            i -= 1;
            if idx[i] < m - (n + 1 - i) {
                idx[i] += 1;
                for k in i + 1..=n {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    sign(v) * (v.abs() - t).max(0.0)
}

/// FISTA on `1/2 x^T Q x - b.x + mu ||x||_1` until the step falls below
/// `tol`, then a support polish: solve `Q_SS x_S = b_S - mu s_S` on the
/// detected support and keep it if it passes the optimality check.
pub fn composite_reference(q: &DMatrix<f64>, b: &DVector<f64>, mu: f64, tol: f64) -> Result<DVector<f64>> {
    let n = b.len();
    let lmax = SymmetricEigen::new(q.clone()).eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(SolverError::invalid("Q has no positive eigenvalue"));
    }
    let step = 1.0 / lmax;
    let mut x = DVector::<f64>::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..1_000_000 {
        let grad = q * &y - b;
        let x_new = (&y - grad * step).map(|v| soft(v, step * mu));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = (&x_new - &x).amax();
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        x = x_new;
        t = t_new;
        if moved <= tol {
            break;
        }
    }
    Ok(polish_support(q, b, mu, x))
}

pub(crate) fn polish_support(a: &DMatrix<f64>, c: &DVector<f64>, mu: f64, z: DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let support: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
    let mut polished = DVector::zeros(n);
    if !support.is_empty() {
        let k = support.len();
        let a_ss = DMatrix::from_fn(k, k, |i, j| a[(support[i], support[j])]);
        let rhs = DVector::from_fn(k, |i, _| c[support[i]] - mu * sign(z[support[i]]));
        let Some(sol) = Cholesky::new(a_ss).map(|ch| ch.solve(&rhs)) else {
            return z;
        };
        for (i, &s) in support.iter().enumerate() {
            if sign(sol[i]) != sign(z[s]) {
                return z;
            }
            polished[s] = sol[i];
        }
    }
    let resid = c - a * &polished;
    let scale = 1.0 + c.amax() + mu;
    for i in 0..n {
        if polished[i] == 0.0 && resid[i].abs() > mu + 1e-10 * scale {
            return z;
        }
    }
    polished
}

/// Builds the five benchmark problems: abs (n=1), l1 (n=5), maxq (n=2),
/// max_affine (n=2, generated) and composite (n=10, generated, planted
/// minimizer with strict complementarity).
pub fn make_problem_suite() -> Vec<BenchmarkProblem> {
    vec![
        abs_problem(),
        l1_problem(5),
        maxq_problem(2),
        max_affine_problem(2, 4, 11),
        composite_problem(10, 1.0, 23),
    ]
}

pub fn abs_problem() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "abs".into(),
        objective: Objective::Abs,
        known_minimizer: Some(DVector::zeros(1)),
        known_minimum: Some(0.0),
        reference_solver_spec: None,
    }
}

pub fn l1_problem(n: usize) -> BenchmarkProblem {
    BenchmarkProblem {
        name: "l1".into(),
        objective: Objective::L1 { n },
        known_minimizer: Some(DVector::zeros(n)),
        known_minimum: Some(0.0),
        reference_solver_spec: None,
    }
}

pub fn maxq_problem(n: usize) -> BenchmarkProblem {
    BenchmarkProblem {
        name: "maxq".into(),
        objective: Objective::MaxQ { n },
        known_minimizer: Some(DVector::zeros(n)),
        known_minimum: Some(0.0),
        reference_solver_spec: None,
    }
}

/// `max(+-x_i - 1, a_j.x + b_j)` with `extra` random pieces. The bounding
/// pieces make the function bounded below; instances whose minimizer is not
/// a sharp vertex are rejected and regenerated.
pub fn max_affine_problem(n: usize, extra: usize, seed: u64) -> BenchmarkProblem {
    let mut rng = named_rng(seed, "max_affine_instance");
    loop {
        let m = 2 * n + extra;
        let mut slopes = DMatrix::zeros(m, n);
        let mut offsets = DVector::zeros(m);
        for i in 0..n {
            slopes[(2 * i, i)] = 1.0;
            slopes[(2 * i + 1, i)] = -1.0;
            offsets[2 * i] = -1.0;
            offsets[2 * i + 1] = -1.0;
        }
        for j in 2 * n..m {
            for i in 0..n {
                slopes[(j, i)] = rng.random_range(-2.0..2.0);
            }
            offsets[j] = rng.random_range(-0.5..0.5);
        }
        let Ok((x, v)) = max_affine_vertex_minimizer(&slopes, &offsets) else {
            continue;
        };
        if !sharp_vertex(&slopes, &offsets, &x, v) {
            continue;
        }
        return BenchmarkProblem {
            name: "max_affine".into(),
            objective: Objective::MaxAffine { slopes, offsets },
            known_minimizer: Some(x),
            known_minimum: Some(v),
            reference_solver_spec: Some(
                "exact vertex enumeration of the epigraph LP min t s.t. t >= a_j.x + b_j".into(),
            ),
        };
    }
}

/// Exactly `n + 1` pieces active at `x` and the origin strictly inside the
/// convex hull of their slopes, so the minimizer is unique and sharp.
fn sharp_vertex(slopes: &DMatrix<f64>, offsets: &DVector<f64>, x: &DVector<f64>, v: f64) -> bool {
    let n = slopes.ncols();
    let active: Vec<usize> = (0..slopes.nrows())
        .filter(|&j| (slopes.row(j).transpose().dot(x) + offsets[j] - v).abs() <= 1e-9)
        .collect();
    if active.len() != n + 1 {
        return false;
    }
    // sum_j w_j a_j = 0, sum_j w_j = 1
    let sys = DMatrix::from_fn(n + 1, n + 1, |r, c| if r < n { slopes[(active[c], r)] } else { 1.0 });
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    match sys.lu().solve(&rhs) {
        Some(w) => w.iter().all(|&wi| wi > 0.05),
        None => false,
    }
}

/// Composite instance with a planted minimizer: `Q` has eigenvalues in
/// `[0.2, 2]`, about half of the minimizer's coordinates are zero, and the
/// zero coordinates satisfy `|(Q x - b)_i| <= 0.7 mu`.
pub fn composite_problem(n: usize, mu: f64, seed: u64) -> BenchmarkProblem {
    let mut rng = named_rng(seed, "composite_instance");
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let basis = g.qr().q();
    let eigs = DVector::from_fn(n, |i, _| 0.2 + 1.8 * i as f64 / (n.max(2) - 1) as f64);
    let q = &basis * DMatrix::from_diagonal(&eigs) * basis.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let mut x_bar = DVector::zeros(n);
    let mut s = DVector::zeros(n);
    for i in 0..n {
        if i % 2 == 0 {
            let mag = rng.random_range(0.5..2.0);
            let sgn = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x_bar[i] = sgn * mag;
            s[i] = sgn;
        } else {
            s[i] = rng.random_range(-0.7..0.7);
        }
    }
    let b = &q * &x_bar + &s * mu;
    let objective = Objective::Composite { q, b, mu };
    let known_minimum = objective.value(&x_bar);
    BenchmarkProblem {
        name: "composite".into(),
        objective,
        known_minimizer: Some(x_bar),
        known_minimum: Some(known_minimum),
        reference_solver_spec: None,
    }
}

/// Composite instance with explicit data; the minimizer comes from the
/// reference solver.
pub fn composite_from_data(name: &str, q: DMatrix<f64>, b: DVector<f64>, mu: f64) -> Result<BenchmarkProblem> {
    let doc = ProblemDocument {
        name: name.into(),
        dimension: b.len(),
        kind: ProblemKind::Composite,
        parameters: serde_json::json!({"Q": rows(&q), "b": b.as_slice(), "mu": mu}),
        known_minimizer: None,
        known_minimum: None,
    };
    doc.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn abs_eval() {
        let f = Objective::Abs;
        assert_eq!(f.eval(&v(&[3.0])).unwrap(), (3.0, v(&[1.0])));
        let (val, s) = f.eval(&v(&[0.0])).unwrap();
        assert_eq!(val, 0.0);
        assert!((-1.0..=1.0).contains(&s[0]));
    }

    #[test]
    fn maxq_eval_and_ties() {
        let f = Objective::MaxQ { n: 2 };
        assert_eq!(f.eval(&v(&[2.0, -1.0])).unwrap(), (4.0, v(&[4.0, 0.0])));
        // tie: lowest index wins
        assert_eq!(f.subgradient(&v(&[1.0, -1.0])), v(&[2.0, 0.0]));
    }

    #[test]
    fn eval_rejects_bad_input() {
        let f = Objective::L1 { n: 2 };
        assert!(f.eval(&v(&[f64::NAN, 0.0])).is_err());
        assert!(f.eval(&v(&[1.0])).is_err());
    }

    #[test]
    fn suite_contents() {
        let suite = make_problem_suite();
        let names: Vec<_> = suite.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["abs", "l1", "maxq", "max_affine", "composite"]);
        let l1 = &suite[1];
        assert_eq!(l1.known_minimizer.as_ref().unwrap(), &DVector::zeros(5));
        assert_eq!(l1.known_minimum, Some(0.0));
        for p in &suite {
            assert!(p.known_minimizer.is_some(), "{}", p.name);
        }
    }

    #[test]
    fn composite_identity_examples() {
        let p = composite_from_data("c0", DMatrix::identity(2, 2), DVector::zeros(2), 1.0).unwrap();
        assert!(p.known_minimizer.unwrap().amax() < 1e-14);
        let p = composite_from_data("c1", DMatrix::identity(2, 2), v(&[2.0, 0.0]), 1.0).unwrap();
        let x = p.known_minimizer.unwrap();
        assert!((&x - v(&[1.0, 0.0])).amax() < 1e-14, "{x}");
    }

    #[test]
    fn composite_soft_threshold_matches_grid() {
        // Q = I, b = (2, 0), mu = 1: brute-force the first coordinate on a grid.
        let f = |z: f64| 0.5 * z * z - 2.0 * z + z.abs();
        let best = (0..=40_000)
            .map(|i| -2.0 + 4.0 * i as f64 / 40_000.0)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((best - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn planted_composite_reference_agrees() {
        let p = composite_problem(10, 1.0, 23);
        let Objective::Composite { q, b, mu } = &p.objective else {
            unreachable!()
        };
        let x_ref = composite_reference(q, b, *mu, 1e-12).unwrap();
        let planted = p.known_minimizer.as_ref().unwrap();
        assert!((&x_ref - planted).amax() < 1e-10, "{}", (&x_ref - planted).amax());
        // zero coordinates strictly inside the dead zone
        let resid = q * planted - b;
        for i in 0..10 {
            if planted[i] == 0.0 {
                assert!(resid[i].abs() <= 0.7 * mu + 1e-12);
            }
        }
    }

    #[test]
    fn max_affine_vertex_is_optimal() {
        let p = max_affine_problem(2, 4, 11);
        let x = p.known_minimizer.clone().unwrap();
        let fstar = p.known_minimum.unwrap();
        assert!((p.value(&x) - fstar).abs() < 1e-12);
        // brute-force grid never beats the vertex
        for i in 0..=200 {
            for j in 0..=200 {
                let y = v(&[-3.0 + 6.0 * i as f64 / 200.0, -3.0 + 6.0 * j as f64 / 200.0]);
                assert!(p.value(&y) >= fstar - 1e-12);
            }
        }
    }

    #[test]
    fn subgradient_inequality_on_suite() {
        let mut rng = named_rng(5, "subgrad-ineq");
        for p in make_problem_suite() {
            let n = p.dimension();
            for _ in 0..1000 {
                let x = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
                let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
                let (fx, s) = p.objective.eval(&x).unwrap();
                let slack = p.value(&y) - fx - s.dot(&(&y - &x));
                assert!(slack >= -1e-10, "{}: {slack}", p.name);
            }
        }
    }

    #[test]
    fn document_round_trip() {
        for p in make_problem_suite() {
            let doc = p.to_document();
            let json = serde_json::to_string(&doc).unwrap();
            let back: ProblemDocument = serde_json::from_str(&json).unwrap();
            assert_eq!(back, doc);
            let rebuilt = back.build().unwrap();
            assert_eq!(rebuilt.objective, p.objective);
            assert_eq!(rebuilt.known_minimizer, p.known_minimizer);
        }
    }

    #[test]
    fn document_without_minimizer_gets_reference() {
        let json = r#"{"name":"m","dimension":2,"kind":"max_affine",
            "parameters":{"slopes":[[1,0],[-1,0],[0,1],[0,-1]],"offsets":[-1,-1,-1,-1]}}"#;
        let doc: ProblemDocument = serde_json::from_str(json).unwrap();
        let p = doc.build().unwrap();
        assert_eq!(p.known_minimum, Some(-1.0));
        assert!(p.reference_solver_spec.is_some());
    }
}
