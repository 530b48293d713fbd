//! Minimization of nonsmooth convex functions through a regularized
//! envelope.
//!
//! The envelope `f_phi(x) = min_z f(z) + phi(z, x) / lambda` is smooth even
//! when `f` is not, and shares its minimizers with `f`. The solver drives the
//! envelope gradient to zero with damped Newton directions, a nonmonotone
//! line search and inexact prox evaluations whose accuracy tightens as the
//! iterates converge.
//!
//! ```
//! use nalgebra::DVector;
//! use phireg::{quadratic_regularizer, solve, l1_problem, SolverConfig, SolveStatus};
//!
//! let problem = l1_problem(3);
//! let reg = quadratic_regularizer(1.0).unwrap();
//! let x0 = DVector::from_element(3, 4.0);
//! let out = solve(&problem, &reg, &x0, &SolverConfig::default()).unwrap();
//! assert_eq!(out.status, SolveStatus::Converged);
//! assert!(out.final_x().amax() < 1e-6);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod linesearch;
pub mod newton;
pub mod oracle;
pub mod prox;
pub mod regularizer;
pub mod rng;
pub mod suite;

pub use driver::{solve, IterateRecord, SolveOutcome, SolveStatus, SolverConfig, StepRecord};
pub use error::{Result, SolverError};
pub use oracle::{
    abs_problem, composite_problem, l1_problem, make_problem_suite, max_affine_problem, maxq_problem, BenchmarkProblem,
    Objective, ProblemDocument,
};
pub use prox::{inexact_prox, ProxBackend, ProxCertificate, ProxOptions};
pub use regularizer::{metric_regularizer, quadratic_regularizer, Regularizer, RegularizerSpec};
