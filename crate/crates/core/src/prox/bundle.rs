//! Cutting-plane (bundle) minimization of `theta(z) = f(z) + phi(z, x) / lambda`.
//!
//! `f` is replaced by the max of its collected linearizations while the
//! quadratic term is kept exact. The model problem is solved in its dual, a
//! concave QP over the simplex of cut weights; every dual-feasible weight
//! vector yields a true lower bound on `min theta`, and the primal point it
//! induces supplies a new cut and an upper bound.

use nalgebra::DVector;

use super::qp::SimplexQp;
use crate::error::{Result, SolverError};
use crate::oracle::{BenchmarkProblem, ConvexOracle};
use crate::regularizer::Regularizer;

/// Cuts kept in the model before compression.
pub const MAX_ACTIVE_CUTS: usize = 200;
/// KKT tolerance of the dual QP.
pub const QP_TOL: f64 = 1e-12;
const QP_MAX_ITER: usize = 200_000;

/// A linearization `f(z_i) + s_i . (z - z_i)`, stored relative to the prox
/// center as `offset + s_i . (z - x)`.
#[derive(Debug, Clone)]
pub struct Cut {
    pub point: DVector<f64>,
    pub value: f64,
    pub subgradient: DVector<f64>,
    offset: f64,
    scaled: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct BundleState {
    pub cuts: Vec<Cut>,
    pub incumbent: (DVector<f64>, f64),
    pub iteration: usize,
    qp: SimplexQp,
}

#[derive(Debug, Clone)]
pub struct BundleResult {
    pub z_best: DVector<f64>,
    pub theta_best: f64,
    pub lower_bound: f64,
    /// Total number of oracle cuts generated, including the one at the center.
    pub cuts_used: usize,
    /// The gap stalled at floating-point resolution above `epsilon`.
    pub resolution_limited: bool,
}

impl BundleState {
    fn new(center: &DVector<f64>, f_center: f64) -> Self {
        BundleState {
            cuts: Vec::new(),
            incumbent: (center.clone(), f_center),
            iteration: 0,
            qp: SimplexQp::default(),
        }
    }

    fn add_cut(&mut self, reg: &Regularizer, x: &DVector<f64>, point: DVector<f64>, value: f64, s: DVector<f64>) {
        let offset = value + s.dot(&(x - &point));
        self.push_linear(reg, point, value, s, offset);
    }

    fn push_linear(&mut self, reg: &Regularizer, point: DVector<f64>, value: f64, s: DVector<f64>, offset: f64) {
        let lambda = reg.lambda();
        let scaled = reg.apply_inverse_metric(&s);
        let mut row: Vec<f64> = self.cuts.iter().map(|c| lambda * c.subgradient.dot(&scaled)).collect();
        row.push(lambda * s.dot(&scaled));
        self.qp.push(offset, &row);
        self.cuts.push(Cut {
            point,
            value,
            subgradient: s,
            offset,
            scaled,
        });
    }

    /// Drops zero-weight cuts, always keeping the newest one and the
    /// incumbent's. If the active set alone is too large it is replaced by
    /// its aggregate linearization.
    fn compress(&mut self, reg: &Regularizer, x: &DVector<f64>) {
        if self.cuts.len() <= MAX_ACTIVE_CUTS {
            return;
        }
        let w = self.qp.weights().to_vec();
        let newest = self.cuts.len() - 1;
        let inc = &self.incumbent.0;
        let mut keep: Vec<usize> = (0..self.cuts.len())
            .filter(|&i| w[i] > 0.0 || i == newest || &self.cuts[i].point == inc)
            .collect();
        if keep.len() > MAX_ACTIVE_CUTS {
            let mut s = DVector::zeros(x.len());
            let mut offset = 0.0;
            for (i, c) in self.cuts.iter().enumerate() {
                s += &c.subgradient * w[i];
                offset += w[i] * c.offset;
            }
            let newest_cut = self.cuts[newest].clone();
            self.cuts.clear();
            self.qp = SimplexQp::default();
            self.push_linear(reg, x.clone(), offset, s, offset);
            self.push_linear(
                reg,
                newest_cut.point,
                newest_cut.value,
                newest_cut.subgradient,
                newest_cut.offset,
            );
            keep.clear();
            return;
        }
        self.qp.retain(&keep);
        self.cuts = keep.iter().map(|&i| self.cuts[i].clone()).collect();
    }

    /// Aggregate subgradient `v = sum w_i s_i`, the induced primal point
    /// `z = x - lambda M^{-1} v` and the dual value (a lower bound), plus the
    /// magnitude of the terms it was summed from.
    fn model_point(&self, reg: &Regularizer, x: &DVector<f64>) -> (DVector<f64>, f64, f64) {
        let w = self.qp.weights();
        let n = x.len();
        let mut v = DVector::zeros(n);
        let mut mv = DVector::zeros(n);
        let mut lin = 0.0;
        let mut mag = 0.0;
        for (c, &wi) in self.cuts.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            v += &c.subgradient * wi;
            mv += &c.scaled * wi;
            lin += wi * c.offset;
            mag += wi * (c.offset.abs() + c.value.abs());
        }
        let lambda = reg.lambda();
        let quad = 0.5 * lambda * v.dot(&mv);
        let z = x - mv * lambda;
        (z, lin - quad, mag + quad.abs())
    }
}

/// Minimizes `theta` to certified accuracy `epsilon`, starting from the
/// prox center.
pub fn bundle_minimize(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x: &DVector<f64>,
    epsilon: f64,
    max_cuts: usize,
) -> Result<BundleResult> {
    if !(epsilon > 0.0) {
        return Err(SolverError::invalid("bundle epsilon must be positive"));
    }
    let oracle = &problem.objective;
    let lambda = reg.lambda();
    let theta = |z: &DVector<f64>, fz: f64| fz + reg.phi(z, x) / lambda;

    let (f0, s0) = oracle.eval(x)?;
    let mut state = BundleState::new(x, f0);
    state.add_cut(reg, x, x.clone(), f0, s0);
    let mut cuts_used = 1;

    loop {
        state.iteration += 1;
        state.qp.solve(QP_TOL, QP_MAX_ITER);
        let (z, lower, magnitude) = state.model_point(reg, x);
        if !lower.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InternalSolver(
                "bundle model produced non-finite values".into(),
            ));
        }
        let (fz, sz) = oracle.eval(&z)?;
        let tz = theta(&z, fz);
        if tz < state.incumbent.1 {
            state.incumbent = (z.clone(), tz);
        }
        let gap = state.incumbent.1 - lower;
        let resolution = 64.0 * f64::EPSILON * (state.incumbent.1.abs() + magnitude);
        if gap <= epsilon || gap <= resolution {
            return Ok(BundleResult {
                z_best: state.incumbent.0,
                theta_best: state.incumbent.1,
                lower_bound: lower,
                cuts_used,
                resolution_limited: gap > epsilon,
            });
        }
        if cuts_used >= max_cuts {
            return Err(SolverError::ProxFailure {
                best: state.incumbent.0.as_slice().to_vec(),
                gap,
                epsilon,
                cuts: cuts_used,
            });
        }
        state.add_cut(reg, x, z, fz, sz);
        cuts_used += 1;
        state.compress(reg, x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{abs_problem, Objective};
    use crate::regularizer::quadratic_regularizer;
    use nalgebra::DMatrix;

    #[test]
    fn single_affine_piece_needs_one_cut() {
        let p = BenchmarkProblem {
            name: "lin".into(),
            objective: Objective::MaxAffine {
                slopes: DMatrix::from_row_slice(1, 2, &[1.0, -2.0]),
                offsets: DVector::from_element(1, 0.5),
            },
            known_minimizer: None,
            known_minimum: None,
            reference_solver_spec: None,
        };
        let reg = quadratic_regularizer(1.0).unwrap();
        let x = DVector::from_column_slice(&[0.3, 0.1]);
        let r = bundle_minimize(&p, &reg, &x, 1e-12, 100).unwrap();
        assert_eq!(r.cuts_used, 1);
        assert!(r.theta_best - r.lower_bound <= 1e-12);
        // z = x - lambda a
        assert!((r.z_best - DVector::from_column_slice(&[-0.7, 2.1])).amax() < 1e-14);
    }

    #[test]
    fn abs_converges_to_soft_threshold() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let x = DVector::from_element(1, 3.0);
        let r = bundle_minimize(&abs_problem(), &reg, &x, 1e-6, 10_000).unwrap();
        assert!((r.z_best[0] - 2.0).abs() <= 1e-3);
        assert!(r.theta_best - r.lower_bound <= 1e-6);
    }

    #[test]
    fn cut_cap_reports_failure() {
        let reg = quadratic_regularizer(1.0).unwrap();
        let p = crate::oracle::maxq_problem(2);
        let x = DVector::from_column_slice(&[2.0, 1.9]);
        match bundle_minimize(&p, &reg, &x, 1e-14, 3) {
            Err(SolverError::ProxFailure { cuts, gap, .. }) => {
                assert_eq!(cuts, 3);
                assert!(gap > 1e-14);
            }
            other => panic!("expected prox failure, got {other:?}"),
        }
    }
}
