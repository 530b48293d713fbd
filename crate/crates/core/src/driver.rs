//! The outer approximate-Newton loop.
//!
//! Each iteration certifies `g_a(x_k, eps_k)`, builds a damped Newton
//! direction, picks `eps_{k+1}`, and runs the GA search on the merit
//! `tau -> f_phi_a(x_k + tau d, eps_{k+1})`. The certificate of the accepted
//! trial point is reused for the next iteration.

use log::{debug, info};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::linesearch::{acceptance_bound, ga_search, gamma_terms, step_length, GaConfig, WindowState};
use crate::newton::{direction, estimate_v, next_alpha, CurvatureEstimate, CurvatureMode, DampingSchedule, FdPolicy};
use crate::oracle::BenchmarkProblem;
use crate::prox::{inexact_prox, ProxCertificate, ProxOptions};
use crate::regularizer::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode {
    /// `eps_{k+1} = eps_k / 2`.
    #[default]
    Halving,
    /// `eps_{k+1} = min(eps_k / 2, eta ||g_a(x_c)||^3)`.
    Superlinear,
}

/// Which gradient drives the superlinear schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateCondition {
    #[default]
    EpsVsCurrentGrad,
    EpsVsPreviousGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub linesearch: GaConfig,
    pub alpha: DampingSchedule,
    pub curvature: CurvatureMode,
    pub fd: FdPolicy,
    pub prox: ProxOptions,
    pub eps0: f64,
    pub eps_mode: EpsMode,
    pub eps_superlinear_eta: f64,
    pub rate_condition: RateCondition,
    pub grad_tol: f64,
    pub eps_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            linesearch: GaConfig::default(),
            alpha: DampingSchedule::default(),
            curvature: CurvatureMode::FiniteDifference,
            fd: FdPolicy::default(),
            prox: ProxOptions::default(),
            eps0: 1e-2,
            eps_mode: EpsMode::Halving,
            eps_superlinear_eta: 1.0,
            rate_condition: RateCondition::EpsVsCurrentGrad,
            grad_tol: 1e-9,
            eps_tol: 1e-12,
            max_iters: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.linesearch.validate()?;
        self.alpha.validate()?;
        self.fd.validate()?;
        let positive = [
            ("eps0", self.eps0),
            ("grad_tol", self.grad_tol),
            ("eps_tol", self.eps_tol),
            ("eps_superlinear_eta", self.eps_superlinear_eta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::Config(format!("{name} must be positive and finite")));
            }
        }
        if self.prox.max_cuts == 0 {
            return Err(SolverError::Config("max_cuts must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened between `x_k` and `x_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub gamma_sup: f64,
    pub gamma_k: f64,
    pub tau: f64,
    pub h: u32,
    pub m: usize,
    pub alpha: f64,
    pub direction: Vec<f64>,
    pub direction_norm: f64,
    /// `g_a . d`
    pub slope: f64,
    pub window_max: f64,
    pub eps_next: f64,
    pub psd_shift: f64,
    pub curvature_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub eps_k: f64,
    pub f_phi_a: f64,
    pub g_a_norm: f64,
    pub dist_to_ref: Option<f64>,
    pub prox_gap: f64,
    pub step: Option<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    ProxFailure,
    LinesearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub trace: Vec<IterateRecord>,
    pub status: SolveStatus,
    pub message: Option<String>,
    pub prox_calls: usize,
}

impl SolveOutcome {
    pub fn final_x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.trace.last().expect("trace is never empty").x)
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

struct Run<'a> {
    problem: &'a BenchmarkProblem,
    reg: &'a Regularizer,
    cfg: &'a SolverConfig,
    prox_calls: usize,
}

impl Run<'_> {
    fn prox(&mut self, x: &DVector<f64>, eps: f64) -> Result<ProxCertificate> {
        self.prox_calls += 1;
        inexact_prox(self.problem, self.reg, x, eps, &self.cfg.prox)
    }

    fn curvature(&mut self, x: &DVector<f64>, eps: f64) -> Result<CurvatureEstimate> {
        match self.cfg.curvature {
            CurvatureMode::Zero => Ok(CurvatureEstimate::zero(x)),
            CurvatureMode::FiniteDifference => {
                let h = self.cfg.fd.step(eps);
                let inner = self.cfg.fd.inner_eps(eps, h);
                self.prox_calls += 2 * x.len();
                estimate_v(self.problem, self.reg, x, inner, h, &self.cfg.prox)
            }
        }
    }

    fn record(&self, k: usize, x: &DVector<f64>, eps: f64, cert: &ProxCertificate) -> IterateRecord {
        IterateRecord {
            k,
            x: x.as_slice().to_vec(),
            eps_k: eps,
            f_phi_a: cert.f_phi_a,
            g_a_norm: cert.g_a.norm(),
            dist_to_ref: self.problem.known_minimizer.as_ref().map(|r| (x - r).norm()),
            prox_gap: cert.gap(),
            step: None,
        }
    }
}

fn next_eps(cfg: &SolverConfig, eps: f64, g_now: f64, g_prev: f64) -> f64 {
    let half = eps / 2.0;
    let e = match cfg.eps_mode {
        EpsMode::Halving => half,
        EpsMode::Superlinear => {
            let g = match cfg.rate_condition {
                RateCondition::EpsVsCurrentGrad => g_now,
                RateCondition::EpsVsPreviousGrad => g_prev,
            };
            half.min(cfg.eps_superlinear_eta * g.powi(3))
        }
    };
    e.max(f64::MIN_POSITIVE)
}

fn failure_status(e: &SolverError) -> SolveStatus {
    match e {
        SolverError::ProxFailure { .. } | SolverError::InternalSolver(_) => SolveStatus::ProxFailure,
        _ => SolveStatus::LinesearchFailure,
    }
}

/// Runs the algorithm from `x0`. Errors are returned only for invalid
/// input; solver breakdowns end the run with a failure status and the
/// partial trace.
pub fn solve(
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let n = problem.dimension();
    if x0.len() != n {
        return Err(SolverError::invalid(format!(
            "x0 has dimension {}, problem has {n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::invalid("x0 is not finite"));
    }
    reg.check_dimension(n)?;

    let mut run = Run {
        problem,
        reg,
        cfg,
        prox_calls: 0,
    };
    let mut trace = Vec::new();
    let finish = |trace, status, message: Option<String>, prox_calls| {
        info!(
            "{}: {:?} ({})",
            problem.name,
            status,
            message.as_deref().unwrap_or("ok")
        );
        Ok(SolveOutcome {
            trace,
            status,
            message,
            prox_calls,
        })
    };

    let mut x = x0.clone();
    let mut eps = cfg.eps0;
    let mut cert = match run.prox(&x, eps) {
        Ok(c) => c,
        Err(e) => return finish(trace, SolveStatus::ProxFailure, Some(e.to_string()), run.prox_calls),
    };
    let mut window = WindowState::new(cert.f_phi_a);
    let mut g_prev = cert.g_a.norm();

    for k in 0.. {
        let mut rec = run.record(k, &x, eps, &cert);
        let g_norm = rec.g_a_norm;
        debug!("k={k} f={:.12e} |g|={g_norm:.3e} eps={eps:.3e}", rec.f_phi_a);
        // a norm that underflows to zero counts as the exact-zero stop
        if g_norm == 0.0 || (g_norm <= cfg.grad_tol && eps <= cfg.eps_tol) {
            trace.push(rec);
            return finish(trace, SolveStatus::Converged, None, run.prox_calls);
        }
        if k >= cfg.max_iters {
            trace.push(rec);
            return finish(trace, SolveStatus::MaxIters, None, run.prox_calls);
        }

        let alpha = next_alpha(&cfg.alpha, g_norm);
        let curv = match run.curvature(&x, eps) {
            Ok(c) => c,
            Err(e) => {
                trace.push(rec);
                return finish(trace, failure_status(&e), Some(e.to_string()), run.prox_calls);
            }
        };
        let step = direction(&curv.v, alpha, &cert.g_a).and_then(|d| {
            let (gamma_sup, gamma_k) = gamma_terms(&cert.g_a, &d, &cfg.linesearch)?;
            Ok((d, gamma_sup, gamma_k))
        });
        let (d, gamma_sup, gamma_k) = match step {
            Ok(s) => s,
            Err(e) => {
                trace.push(rec);
                return finish(
                    trace,
                    SolveStatus::LinesearchFailure,
                    Some(e.to_string()),
                    run.prox_calls,
                );
            }
        };
        let eps_next = next_eps(cfg, eps, g_norm, g_prev);
        let slope = cert.g_a.dot(&d);
        let window_max = window.max();
        let m = window.m();
        let searched = ga_search(
            |tau| {
                let c = run.prox(&(&x + &d * tau), eps_next)?;
                Ok((c.f_phi_a, c))
            },
            slope,
            &window,
            gamma_k,
            eps,
            &cfg.linesearch,
        );
        let accepted = match searched {
            Ok(s) => s,
            Err(e) => {
                trace.push(rec);
                return finish(trace, failure_status(&e), Some(e.to_string()), run.prox_calls);
            }
        };

        rec.step = Some(StepRecord {
            gamma_sup,
            gamma_k,
            tau: accepted.tau,
            h: accepted.h,
            m,
            alpha,
            direction: d.as_slice().to_vec(),
            direction_norm: d.norm(),
            slope,
            window_max,
            eps_next,
            psd_shift: curv.psd_shift_applied,
            curvature_fallback: curv.fallback,
        });
        trace.push(rec);

        x += &d * accepted.tau;
        cert = accepted.payload;
        window.update(accepted.value, cfg.linesearch.window);
        g_prev = g_norm;
        eps = eps_next;
    }
    unreachable!()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocViolation {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub allowance: f64,
    pub tau_consistent: bool,
    pub window_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocReport {
    pub steps_checked: usize,
    pub violations: Vec<PosthocViolation>,
    /// Largest `lhs - rhs` seen, before the allowance.
    pub max_excess: f64,
}

impl PosthocReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks every accepted step: the left side is recomputed with a fresh,
/// tighter prox at `x_k + tau d`, the window maximum is rebuilt from the
/// recorded merit values, and `tau = rho^h a` is checked exactly. A step is
/// a violation if it exceeds the bound by more than `2 eps_{k+1} + 2 eps_k`
/// or is internally inconsistent.
pub fn check_acceptance_posthoc(
    trace: &[IterateRecord],
    problem: &BenchmarkProblem,
    reg: &Regularizer,
    cfg: &SolverConfig,
) -> Result<PosthocReport> {
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    let mut checked = 0;
    for (i, rec) in trace.iter().enumerate() {
        let Some(step) = &rec.step else { continue };
        checked += 1;
        let x = DVector::from_column_slice(&rec.x);
        let d = DVector::from_column_slice(&step.direction);
        let trial = &x + &d * step.tau;
        let fresh_eps = (step.eps_next * 1e-2).max(1e-13);
        let lhs = inexact_prox(problem, reg, &trial, fresh_eps, &cfg.prox)?.f_phi_a;
        let start = i.saturating_sub(step.m);
        let rebuilt_max = trace[start..=i]
            .iter()
            .map(|r| r.f_phi_a)
            .fold(f64::NEG_INFINITY, f64::max);
        let rhs = acceptance_bound(rebuilt_max, step.gamma_k, step.tau, step.slope, rec.eps_k);
        let allowance = 2.0 * step.eps_next + 2.0 * rec.eps_k;
        let tau_consistent = step.tau == step_length(&cfg.linesearch, step.h);
        let window_consistent = rebuilt_max == step.window_max && step.m <= cfg.linesearch.window && step.m <= i;
        max_excess = max_excess.max(lhs - rhs);
        if lhs > rhs + allowance || !tau_consistent || !window_consistent {
            violations.push(PosthocViolation {
                k: rec.k,
                lhs,
                rhs,
                allowance,
                tau_consistent,
                window_consistent,
            });
        }
    }
    Ok(PosthocReport {
        steps_checked: checked,
        violations,
        max_excess,
    })
}

fn rounding(v: f64) -> f64 {
    8.0 * f64::EPSILON * (1.0 + v.abs())
}

/// Largest `f_phi_a(x_k, eps_k) - (f_phi_a(x_0, eps_0) + sum_{i<k} eps_i)`
/// over the trace, net of a few ulps of rounding; nonpositive when merit
/// boundedness holds.
pub fn merit_bound_excess(trace: &[IterateRecord]) -> f64 {
    let Some(first) = trace.first() else {
        return f64::NEG_INFINITY;
    };
    let mut budget = first.f_phi_a;
    let mut worst = f64::NEG_INFINITY;
    for rec in trace {
        worst = worst.max(rec.f_phi_a - budget - rounding(budget));
        budget += rec.eps_k;
    }
    worst
}

/// Largest `f_{k+1} - f_k - eps_k`, net of rounding; nonpositive for a run
/// that is monotone up to the per-step slack.
pub fn monotone_excess(trace: &[IterateRecord]) -> f64 {
    trace
        .windows(2)
        .map(|w| w[1].f_phi_a - w[0].f_phi_a - w[0].eps_k - rounding(w[0].f_phi_a))
        .fold(f64::NEG_INFINITY, f64::max)
}
