//! The acceptance suite: nine numbered criteria, each producing a JSON
//! report, plus a CSV summary.
//!
//! All randomness is drawn from [`named_rng`] streams derived from the run
//! seed, and every report is rendered with a fixed field order, so two runs
//! with the same seed write identical bytes.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{bd_regularity_probe, lipschitz_probe, optimality_report, rate_report};
use crate::driver::{
    check_acceptance_posthoc, merit_bound_excess, monotone_excess, solve, EpsMode, RateCondition, SolveStatus,
    SolverConfig,
};
use crate::error::{Result, SolverError};
use crate::linesearch::GaConfig;
use crate::newton::{CurvatureMode, DampingMode, DampingSchedule};
use crate::oracle::{abs_problem, l1_problem, make_problem_suite, maxq_problem, BenchmarkProblem, ProblemKind};
use crate::prox::{inexact_prox, verify_certificate_bounds, ProxBackend, ProxOptions};
use crate::regularizer::{
    axiom_report, exact_envelope, lipschitz_of_envelope, metric_regularizer, quadratic_regularizer, EXACT_BUNDLE_TOL,
};
use crate::rng::named_rng;

pub const DEFAULT_SEED: u64 = 20240901;

/// Tolerances pinned by the acceptance criteria.
pub mod thresholds {
    pub const AXIOM_SLACK: f64 = 1e-9;
    pub const AXIOM_SAMPLES: usize = 1000;
    pub const AXIOM_FD_RELATIVE: f64 = 1e-6;
    pub const HUBER_GRID_POINTS: usize = 201;
    pub const HUBER_TOL: f64 = 1e-8;
    pub const BOUND_EPSILONS: [f64; 4] = [1e-1, 1e-2, 1e-4, 1e-6];
    pub const BOUND_POINTS: usize = 100;
    pub const LIPSCHITZ_PAIRS: usize = 1000;
    pub const LIPSCHITZ_LAMBDAS: [f64; 3] = [0.5, 1.0, 4.0];
    pub const OPTIMALITY_TOL: f64 = 1e-6;
    pub const AWAY_POINTS: usize = 10;
    pub const AWAY_MIN_DISTANCE: f64 = 0.1;
    pub const AWAY_RESIDUAL: f64 = 1e-2;
    pub const CONVERGENCE_STARTS: usize = 10;
    pub const START_BOX: f64 = 10.0;
    pub const OBJECTIVE_GAP: f64 = 1e-6;
    pub const MAX_OUTER_ITERS: usize = 200;
    pub const RATE_TAIL_2STEP: f64 = 0.1;
    pub const RATE_UNIT_STEPS: usize = 5;
    pub const GD_TAIL_1STEP: f64 = 0.2;
    pub const RATE_STARTS: usize = 3;
    pub const WINDOW_STARTS: usize = 3;
}
use thresholds as t;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub key_statistic: String,
    pub key_value: f64,
    pub report: Value,
}

impl CriterionOutcome {
    fn new(id: u8, name: &str, passed: bool, key: &str, value: f64, report: Value) -> Self {
        CriterionOutcome {
            id,
            name: name.into(),
            passed,
            key_statistic: key.into(),
            key_value: value,
            report,
        }
    }

    pub fn file_name(&self) -> String {
        format!("criterion_{}_{}.json", self.id, self.name)
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn status_line(&self) -> String {
        format!(
            "criterion {} {}: {} ({} = {:e})",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.key_statistic,
            self.key_value
        )
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn random_point<R: Rng>(rng: &mut R, n: usize, half: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half..half))
}

/// Axioms of the quadratic and the `diag(3, 0.5)` metric regularizers.
pub fn criterion_1(seed: u64) -> Result<CriterionOutcome> {
    let q = quadratic_regularizer(1.0)?;
    let m = metric_regularizer(&DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 0.5])), 1.0)?;
    let mut reports = Vec::new();
    for (label, reg, n) in [("quadratic", &q, 3), ("metric_diag_3_0.5", &m, 2)] {
        let mut rng = named_rng(seed, &format!("axioms/{label}"));
        let r = axiom_report(reg, n, t::AXIOM_SAMPLES, t::AXIOM_SLACK, t::AXIOM_FD_RELATIVE, &mut rng);
        reports.push((label, r));
    }
    let passed = reports.iter().all(|(_, r)| r.passed);
    let worst = reports
        .iter()
        .map(|(_, r)| {
            r.nonnegativity_violation
                .max(r.diagonal_violation)
                .max(r.strong_convexity_violation)
                .max(r.lipschitz_violation)
                .max(r.antisymmetry_violation)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let report = json!({
        "regularizers": reports.iter().map(|(l, r)| json!({"regularizer": l, "report": to_value(r)})).collect::<Vec<_>>(),
    });
    Ok(CriterionOutcome::new(
        1,
        "regularizer_axioms",
        passed,
        "max_axiom_violation",
        worst,
        report,
    ))
}

fn huber(x: f64) -> (f64, f64, f64) {
    if x.abs() <= 1.0 {
        (0.5 * x * x, 0.0, x)
    } else {
        (x.abs() - 0.5, x - x.signum(), x.signum())
    }
}

/// `exact_envelope` of `|.|` against the Huber function on a grid.
pub fn criterion_2(_seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let p = abs_problem();
    let bundle = ProxOptions {
        backend: ProxBackend::Bundle,
        ..ProxOptions::default()
    };
    let mut worst = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut worst_bundle_value = 0.0_f64;
    let n = t::HUBER_GRID_POINTS;
    for i in 0..n {
        let x = -5.0 + 10.0 * i as f64 / (n - 1) as f64;
        let xv = DVector::from_element(1, x);
        let env = exact_envelope(&p, &reg, &xv, 1e-10)?;
        let (v, pp, g) = huber(x);
        worst.0 = worst.0.max((env.f_phi - v).abs());
        worst.1 = worst.1.max((env.p[0] - pp).abs());
        worst.2 = worst.2.max((env.grad[0] - g).abs());
        let b = inexact_prox(&p, &reg, &xv, EXACT_BUNDLE_TOL, &bundle)?;
        worst_bundle_value = worst_bundle_value.max((b.f_phi_a - v).abs());
    }
    let max_err = worst.0.max(worst.1).max(worst.2);
    let report = json!({
        "grid_points": n,
        "max_value_error": worst.0,
        "max_prox_error": worst.1,
        "max_gradient_error": worst.2,
        "tolerance": t::HUBER_TOL,
        "bundle_backend_max_value_error": worst_bundle_value,
    });
    Ok(CriterionOutcome::new(
        2,
        "moreau_consistency",
        max_err <= t::HUBER_TOL,
        "max_error",
        max_err,
        report,
    ))
}

/// Value sandwich, prox-point and gradient bounds for bundle certificates.
pub fn criterion_3(seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let bundle = ProxOptions {
        backend: ProxBackend::Bundle,
        ..ProxOptions::default()
    };
    let mut rows = Vec::new();
    let mut total_violations = 0usize;
    let mut unsound = 0usize;
    for p in make_problem_suite() {
        let n = p.dimension();
        for &eps in &t::BOUND_EPSILONS {
            let mut rng = named_rng(seed, &format!("bounds/{}/{eps:e}", p.name));
            let mut violations = [0usize; 4];
            let mut min_slack = [f64::INFINITY; 4];
            let mut max_cuts = 0;
            let mut resolution_limited = 0;
            for _ in 0..t::BOUND_POINTS {
                let x = random_point(&mut rng, n, 5.0);
                let exact = exact_envelope(&p, &reg, &x, eps * 1e-4)?;
                let cert = inexact_prox(&p, &reg, &x, eps, &bundle)?;
                let theta = p.value(&cert.p_a) + reg.phi(&cert.p_a, &x) / reg.lambda();
                if theta > cert.lower_bound + eps {
                    unsound += 1;
                }
                max_cuts = max_cuts.max(cert.cuts_used);
                resolution_limited += cert.resolution_limited as usize;
                let rep = verify_certificate_bounds(&reg, eps, &exact, &cert);
                for (i, c) in [rep.value_lower, rep.value_upper, rep.point, rep.gradient]
                    .iter()
                    .enumerate()
                {
                    violations[i] += !c.holds as usize;
                    min_slack[i] = min_slack[i].min(c.slack);
                }
            }
            total_violations += violations.iter().sum::<usize>();
            rows.push(json!({
                "problem": p.name,
                "epsilon": eps,
                "points": t::BOUND_POINTS,
                "violations": {"value_lower": violations[0], "value_upper": violations[1], "point": violations[2], "gradient": violations[3]},
                "min_slack": {"value_lower": min_slack[0], "value_upper": min_slack[1], "point": min_slack[2], "gradient": min_slack[3]},
                "max_cuts": max_cuts,
                "resolution_limited": resolution_limited,
            }));
        }
    }

    // negative control: move the prox point 1.5x past the allowed radius
    let p = abs_problem();
    let x = DVector::from_element(1, 3.0);
    let eps = 1e-2;
    let exact = exact_envelope(&p, &reg, &x, 1e-10)?;
    let mut bad = inexact_prox(&p, &reg, &x, eps, &ProxOptions::default())?;
    bad.p_a = &exact.p + DVector::from_element(1, 1.5 * (reg.lambda() * eps / reg.beta()).sqrt());
    let control_flagged = !verify_certificate_bounds(&reg, eps, &exact, &bad).point.holds;

    let passed = total_violations == 0 && unsound == 0 && control_flagged;
    let report = json!({
        "rows": rows,
        "total_violations": total_violations,
        "unsound_certificates": unsound,
        "negative_control_flagged": control_flagged,
    });
    Ok(CriterionOutcome::new(
        3,
        "certificate_bounds",
        passed,
        "total_violations",
        total_violations as f64,
        report,
    ))
}

/// Envelope gradient Lipschitz constant on the l1 and MAXQ problems.
pub fn criterion_4(seed: u64) -> Result<CriterionOutcome> {
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst_fraction = 0.0_f64;
    for p in [l1_problem(5), maxq_problem(2)] {
        for &lambda in &t::LIPSCHITZ_LAMBDAS {
            let reg = quadratic_regularizer(lambda)?;
            let mut rng = named_rng(seed, &format!("lipschitz/{}/{lambda}", p.name));
            let r = lipschitz_probe(&p, &reg, t::LIPSCHITZ_PAIRS, -5.0, 5.0, &mut rng)?;
            passed &= r.passed;
            worst_fraction = worst_fraction.max(r.max_ratio / r.bound);
            rows.push(json!({"problem": p.name, "lambda": lambda, "report": to_value(&r)}));
        }
    }
    let c1 = lipschitz_of_envelope(&quadratic_regularizer(1.0)?);
    let exact_one = c1 == 1.0;
    let report = json!({"rows": rows, "quadratic_lambda_1_bound": c1, "bound_is_exactly_one": exact_one});
    Ok(CriterionOutcome::new(
        4,
        "envelope_lipschitz",
        passed && exact_one,
        "max_ratio_over_bound",
        worst_fraction,
        report,
    ))
}

/// Optimality residuals at the minimizers and away from them.
pub fn criterion_5(seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst_at_min = 0.0_f64;
    for p in make_problem_suite() {
        let xbar = p
            .known_minimizer
            .clone()
            .ok_or_else(|| SolverError::invalid("suite problem without minimizer"))?;
        let at = optimality_report(&p, &reg, &xbar, t::OPTIMALITY_TOL)?;
        let ok_at = at.max_residual() <= t::OPTIMALITY_TOL;
        worst_at_min = worst_at_min.max(at.max_residual());
        let mut rng = named_rng(seed, &format!("optimality/{}", p.name));
        let mut away_min_of_max = f64::INFINITY;
        let mut away_ok = 0;
        for _ in 0..t::AWAY_POINTS {
            let u = random_point(&mut rng, p.dimension(), 1.0);
            let r = rng.random_range(t::AWAY_MIN_DISTANCE..3.0);
            let x = &xbar + &u * (r / u.norm());
            let rep = optimality_report(&p, &reg, &x, t::OPTIMALITY_TOL)?;
            away_min_of_max = away_min_of_max.min(rep.max_residual());
            away_ok += (rep.max_residual() >= t::AWAY_RESIDUAL) as usize;
        }
        passed &= ok_at && away_ok == t::AWAY_POINTS;
        rows.push(json!({
            "problem": p.name,
            "at_minimizer": to_value(&at),
            "away_points": t::AWAY_POINTS,
            "away_points_detected": away_ok,
            "away_smallest_max_residual": away_min_of_max,
        }));
    }
    Ok(CriterionOutcome::new(
        5,
        "optimality_certificates",
        passed,
        "max_residual_at_minimizers",
        worst_at_min,
        json!({"rows": rows}),
    ))
}

/// Default solver from random starts on every suite problem.
pub fn criterion_6(seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let cfg = SolverConfig {
        eps_mode: EpsMode::Halving,
        max_iters: t::MAX_OUTER_ITERS,
        ..SolverConfig::default()
    };
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst_gap = 0.0_f64;
    for p in make_problem_suite() {
        let fstar = p
            .known_minimum
            .ok_or_else(|| SolverError::invalid("suite problem without minimum"))?;
        let mut rng = named_rng(seed, &format!("convergence/{}", p.name));
        let mut runs = Vec::new();
        for _ in 0..t::CONVERGENCE_STARTS {
            let x0 = random_point(&mut rng, p.dimension(), t::START_BOX);
            let out = solve(&p, &reg, &x0, &cfg)?;
            let gap = p.value(&out.final_x()) - fstar;
            let post = check_acceptance_posthoc(&out.trace, &p, &reg, &cfg)?;
            let ok = gap <= t::OBJECTIVE_GAP
                && out.iterations() <= t::MAX_OUTER_ITERS
                && out.status != SolveStatus::LinesearchFailure
                && post.passed();
            passed &= ok;
            worst_gap = worst_gap.max(gap);
            runs.push(json!({
                "status": out.status,
                "iterations": out.iterations(),
                "objective_gap": gap,
                "posthoc_steps": post.steps_checked,
                "posthoc_violations": post.violations.len(),
                "posthoc_max_excess": post.max_excess,
                "prox_calls": out.prox_calls,
                "passed": ok,
            }));
        }
        rows.push(json!({"problem": p.name, "runs": runs}));
    }
    Ok(CriterionOutcome::new(
        6,
        "global_convergence",
        passed,
        "max_objective_gap",
        worst_gap,
        json!({"rows": rows}),
    ))
}

/// The composite instance used for the rate criterion.
pub fn rate_problem() -> BenchmarkProblem {
    make_problem_suite()
        .into_iter()
        .find(|p| p.objective.kind() == ProblemKind::Composite)
        .expect("suite has a composite problem")
}

/// Configuration of the gradient-descent control: `V = 0`, constant `alpha`.
pub fn gradient_descent_config() -> SolverConfig {
    SolverConfig {
        curvature: CurvatureMode::Zero,
        alpha: DampingSchedule {
            mode: DampingMode::Constant,
            alpha0: 1.0,
            ..DampingSchedule::default()
        },
        max_iters: t::MAX_OUTER_ITERS,
        ..SolverConfig::default()
    }
}

/// Two-step superlinear rate of the Newton runs and linear rate of the
/// gradient-descent control.
pub fn criterion_7(seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let p = rate_problem();
    let xbar = p
        .known_minimizer
        .clone()
        .ok_or_else(|| SolverError::invalid("rate problem without minimizer"))?;
    let mut rng = named_rng(seed, "rate/starts");
    let starts: Vec<DVector<f64>> = (0..t::RATE_STARTS)
        .map(|_| random_point(&mut rng, p.dimension(), t::START_BOX))
        .collect();

    let mut passed = true;
    let mut worst_tail = 0.0_f64;
    let mut newton_tail_1step = 0.0_f64;
    let mut newton_rows = Vec::new();
    for rc in [RateCondition::EpsVsCurrentGrad, RateCondition::EpsVsPreviousGrad] {
        let cfg = SolverConfig {
            linesearch: GaConfig {
                delta: 0.45,
                a: 1.0,
                ..GaConfig::default()
            },
            alpha: DampingSchedule {
                mode: DampingMode::GradientProportional,
                ..DampingSchedule::default()
            },
            eps_mode: EpsMode::Superlinear,
            rate_condition: rc,
            max_iters: t::MAX_OUTER_ITERS,
            ..SolverConfig::default()
        };
        for x0 in &starts {
            let out = solve(&p, &reg, x0, &cfg)?;
            let steps: Vec<f64> = out
                .trace
                .iter()
                .filter_map(|r| r.step.as_ref().map(|s| s.tau))
                .collect();
            let unit_tail = steps.len() >= t::RATE_UNIT_STEPS
                && steps[steps.len() - t::RATE_UNIT_STEPS..].iter().all(|&s| s == 1.0);
            let (tail2, tail1, rate) = match rate_report(&out.trace, &xbar) {
                Ok(r) => (r.tail_max_2step, r.tail_max_1step, to_value(&r)),
                Err(e) => (f64::INFINITY, f64::INFINITY, json!({"error": e.to_string()})),
            };
            let ok = out.status == SolveStatus::Converged && tail2 <= t::RATE_TAIL_2STEP && unit_tail;
            passed &= ok;
            worst_tail = worst_tail.max(tail2);
            newton_tail_1step = newton_tail_1step.max(tail1);
            newton_rows.push(json!({
                "rate_condition": rc,
                "status": out.status,
                "iterations": out.iterations(),
                "unit_steps_in_tail": unit_tail,
                "rate": rate,
                "passed": ok,
            }));
        }
    }

    let gd = gradient_descent_config();
    let mut gd_rows = Vec::new();
    let mut gd_tail_min = f64::INFINITY;
    for x0 in &starts {
        let out = solve(&p, &reg, x0, &gd)?;
        let (tail1, rate) = match rate_report(&out.trace, &xbar) {
            Ok(r) => (r.tail_min_1step, to_value(&r)),
            Err(e) => (0.0, json!({"error": e.to_string()})),
        };
        gd_tail_min = gd_tail_min.min(tail1);
        gd_rows
            .push(json!({"status": out.status, "iterations": out.iterations(), "tail_min_1step": tail1, "rate": rate}));
    }
    let gd_linear = gd_tail_min >= t::GD_TAIL_1STEP;
    let separated = newton_tail_1step <= 0.5 * gd_tail_min;
    passed &= gd_linear && separated;

    let mut bd_rng = named_rng(seed, "rate/bd");
    let bd = bd_regularity_probe(&p, &reg, &xbar, 5, 1e-4, &mut bd_rng)?;

    let report = json!({
        "newton_runs": newton_rows,
        "gradient_descent_runs": gd_rows,
        "gradient_descent_tail_min_1step": gd_tail_min,
        "newton_tail_max_1step": newton_tail_1step,
        "rate_separated": separated,
        "bd_regularity": to_value(&bd),
    });
    Ok(CriterionOutcome::new(
        7,
        "superlinear_rate",
        passed,
        "max_tail_2step_ratio",
        worst_tail,
        report,
    ))
}

/// Monotone runs with `M = 0` and merit boundedness with `M = 5`.
pub fn criterion_8(seed: u64) -> Result<CriterionOutcome> {
    let reg = quadratic_regularizer(1.0)?;
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst = f64::NEG_INFINITY;
    for window in [0usize, 5] {
        let cfg = SolverConfig {
            linesearch: GaConfig {
                window,
                ..GaConfig::default()
            },
            ..SolverConfig::default()
        };
        for p in make_problem_suite() {
            let mut rng = named_rng(seed, &format!("window/{window}/{}", p.name));
            for _ in 0..t::WINDOW_STARTS {
                let x0 = random_point(&mut rng, p.dimension(), t::START_BOX);
                let out = solve(&p, &reg, &x0, &cfg)?;
                let excess = if window == 0 {
                    monotone_excess(&out.trace)
                } else {
                    merit_bound_excess(&out.trace)
                };
                let max_m = out
                    .trace
                    .iter()
                    .filter_map(|r| r.step.as_ref().map(|s| s.m))
                    .max()
                    .unwrap_or(0);
                let ok = excess <= 0.0 && max_m <= window;
                passed &= ok;
                worst = worst.max(excess);
                rows.push(json!({
                    "window": window,
                    "problem": p.name,
                    "status": out.status,
                    "iterations": out.iterations(),
                    "check": if window == 0 { "monotone" } else { "merit_bounded" },
                    "max_excess": excess,
                    "max_m": max_m,
                    "passed": ok,
                }));
            }
        }
    }
    Ok(CriterionOutcome::new(
        8,
        "window_mechanics",
        passed,
        "max_excess",
        worst,
        json!({"rows": rows}),
    ))
}

/// Criteria 1-8 in order.
pub fn run_criteria(seed: u64) -> Result<Vec<CriterionOutcome>> {
    let all: [fn(u64) -> Result<CriterionOutcome>; 8] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
    ];
    all.iter().map(|c| c(seed)).collect()
}

/// Renders a second, independent evaluation of criteria 1-8 and compares it
/// byte for byte with `first`.
pub fn criterion_9(seed: u64, first: &[CriterionOutcome]) -> Result<CriterionOutcome> {
    let second = run_criteria(seed)?;
    let mismatched: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.render() != b.render())
        .map(|(a, _)| a.file_name())
        .collect();
    let passed = mismatched.is_empty() && first.len() == second.len();
    let report = json!({"compared_reports": first.len(), "mismatched": mismatched});
    Ok(CriterionOutcome::new(
        9,
        "determinism",
        passed,
        "mismatched_reports",
        mismatched.len() as f64,
        report,
    ))
}

pub fn summary_csv(outcomes: &[CriterionOutcome]) -> String {
    let mut s = String::from("criterion,status,key_statistic,value\n");
    for o in outcomes {
        s.push_str(&format!(
            "{}_{},{},{},{:e}\n",
            o.id,
            o.name,
            if o.passed { "pass" } else { "fail" },
            o.key_statistic,
            o.key_value
        ));
    }
    s
}

/// Runs every criterion, writes one JSON report per criterion and
/// `summary.csv` into `dir`, and returns the outcomes.
pub fn run_suite(seed: u64, dir: &Path) -> Result<Vec<CriterionOutcome>> {
    fs::create_dir_all(dir).map_err(|e| SolverError::Io(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| SolverError::Io(format!("{}: {e}", path.display())))
    };
    let mut outcomes = run_criteria(seed)?;
    for o in &outcomes {
        write(&o.file_name(), &o.render())?;
    }
    let c9 = criterion_9(seed, &outcomes)?;
    write(&c9.file_name(), &c9.render())?;
    outcomes.push(c9);
    write("summary.csv", &summary_csv(&outcomes))?;
    Ok(outcomes)
}
