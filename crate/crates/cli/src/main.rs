//! `solver <command> --config <file> [--seed N] [--out DIR]`
//!
//! Exit codes: 0 on success, 1 when a solve or a verification fails, 2 on
//! configuration and I/O errors. `RUST_LOG` controls log verbosity.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use phireg::diagnostics::{lipschitz_probe, rate_report};
use phireg::prox::verify_certificate_bounds;
use phireg::regularizer::{axiom_report, exact_envelope};
use phireg::rng::named_rng;
use phireg::suite::{self, DEFAULT_SEED};
use phireg::{
    inexact_prox, make_problem_suite, solve, BenchmarkProblem, ProblemDocument, ProxOptions, Regularizer,
    RegularizerSpec, SolveStatus, SolverConfig, SolverError,
};

#[derive(Parser, Debug)]
#[command(
    name = "solver",
    version,
    about = "Nonsmooth convex minimization through regularized envelopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run specification (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Minimize a problem; writes trace.jsonl and summary.json.
    Solve,
    /// Check the regularizer axioms on random samples.
    VerifyRegularizer,
    /// Check inexact prox certificates against the exact envelope.
    VerifyProx,
    /// Probe the envelope gradient Lipschitz constant.
    VerifyLipschitz,
    /// Solve, then estimate the convergence rate against the known minimizer.
    Rate,
    /// Run every acceptance criterion.
    Suite,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ProblemRef {
    Named(String),
    Document(ProblemDocument),
}

/// Shared run specification. Commands read the fields they need.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    problem: Option<ProblemRef>,
    regularizer: Option<RegularizerSpec>,
    #[serde(default)]
    solver: SolverConfig,
    x0: Option<Vec<f64>>,
    /// Half-width of the box random points are drawn from.
    #[serde(default = "default_box")]
    box_half_width: f64,
    #[serde(default = "default_samples")]
    samples: usize,
    dimension: Option<usize>,
    #[serde(default = "default_epsilons")]
    epsilons: Vec<f64>,
    #[serde(default)]
    prox: ProxOptions,
}

fn default_box() -> f64 {
    5.0
}

fn default_samples() -> usize {
    100
}

fn default_epsilons() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-4, 1e-6]
}

impl Default for RunSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty spec is valid")
    }
}

#[derive(Debug)]
enum Failure {
    /// Bad input or I/O: exit 2.
    Config(String),
    /// The computation ran but did not succeed: exit 1.
    Check(String),
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidArgument(_) | SolverError::Config(_) | SolverError::Io(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Check(other.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

impl RunSpec {
    fn problem(&self) -> std::result::Result<BenchmarkProblem, Failure> {
        match &self.problem {
            None => Err(Failure::Config("run spec has no \"problem\"".into())),
            Some(ProblemRef::Named(name)) => {
                make_problem_suite()
                    .into_iter()
                    .find(|p| &p.name == name)
                    .ok_or_else(|| {
                        let names: Vec<String> = make_problem_suite().into_iter().map(|p| p.name).collect();
                        Failure::Config(format!(
                            "unknown problem {name:?}; built-in problems: {}",
                            names.join(", ")
                        ))
                    })
            }
            Some(ProblemRef::Document(doc)) => Ok(doc.build()?),
        }
    }

    fn regularizer(&self) -> std::result::Result<Regularizer, Failure> {
        let spec = self
            .regularizer
            .as_ref()
            .ok_or_else(|| Failure::Config("run spec has no \"regularizer\"".into()))?;
        Ok(spec.build()?)
    }

    fn start(&self, n: usize, seed: u64) -> std::result::Result<DVector<f64>, Failure> {
        match &self.x0 {
            Some(x) if x.len() != n => Err(Failure::Config(format!(
                "x0 has length {}, problem has dimension {n}",
                x.len()
            ))),
            Some(x) => Ok(DVector::from_column_slice(x)),
            None => {
                let mut rng = named_rng(seed, "cli/x0");
                Ok(DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0)))
            }
        }
    }
}

fn load_spec(path: Option<&Path>) -> std::result::Result<RunSpec, Failure> {
    let Some(path) = path else {
        return Ok(RunSpec::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> std::result::Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, body: &str) -> CliResult {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult {
        let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
        s.push('\n');
        println!("{s}");
        self.write(name, &s)
    }
}

fn cmd_solve(spec: &RunSpec, seed: u64, out: &Output) -> CliResult {
    let problem = spec.problem()?;
    let reg = spec.regularizer()?;
    let x0 = spec.start(problem.dimension(), seed)?;
    let outcome = solve(&problem, &reg, &x0, &spec.solver)?;
    let mut lines = String::new();
    for rec in &outcome.trace {
        lines.push_str(&serde_json::to_string(rec).expect("records serialize"));
        lines.push('\n');
    }
    out.write("trace.jsonl", &lines)?;
    let x = outcome.final_x();
    let value = problem.value(&x);
    let summary = json!({
        "problem": problem.name,
        "status": outcome.status,
        "message": outcome.message,
        "iterations": outcome.iterations(),
        "prox_calls": outcome.prox_calls,
        "final_x": x.as_slice(),
        "final_value": value,
        "objective_gap": problem.known_minimum.map(|m| value - m),
        "final_grad_norm": outcome.trace.last().map(|r| r.g_a_norm),
    });
    out.write_json("summary.json", &summary)?;
    match outcome.status {
        SolveStatus::Converged => Ok(()),
        s => Err(Failure::Check(format!("solve ended with status {s:?}"))),
    }
}

fn cmd_verify_regularizer(spec: &RunSpec, seed: u64, out: &Output) -> CliResult {
    let reg = spec.regularizer()?;
    let n = reg.dimension().or(spec.dimension).unwrap_or(3);
    let mut rng = named_rng(seed, "cli/verify-regularizer");
    let report = axiom_report(&reg, n, spec.samples, 1e-9, 1e-6, &mut rng);
    out.write_json("regularizer_report.json", &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check("regularizer axioms violated".into()))
    }
}

fn cmd_verify_prox(spec: &RunSpec, seed: u64, out: &Output) -> CliResult {
    let problem = spec.problem()?;
    let reg = spec.regularizer()?;
    let n = problem.dimension();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &eps in &spec.epsilons {
        let mut rng = named_rng(seed, &format!("cli/verify-prox/{eps:e}"));
        let mut worst: Option<Value> = None;
        let mut min_slack = f64::INFINITY;
        for _ in 0..spec.samples {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-spec.box_half_width..spec.box_half_width));
            let exact = exact_envelope(&problem, &reg, &x, eps * 1e-4)?;
            let cert = inexact_prox(&problem, &reg, &x, eps, &spec.prox)?;
            let rep = verify_certificate_bounds(&reg, eps, &exact, &cert);
            let checks = [
                ("value_lower", rep.value_lower),
                ("value_upper", rep.value_upper),
                ("point", rep.point),
                ("gradient", rep.gradient),
            ];
            for (name, c) in checks {
                if !c.holds && !failed.contains(&name) {
                    failed.push(name);
                }
                if c.slack < min_slack {
                    min_slack = c.slack;
                    worst = Some(json!({"bound": name, "x": x.as_slice(), "check": c}));
                }
            }
        }
        rows.push(json!({"epsilon": eps, "points": spec.samples, "min_slack": min_slack, "tightest": worst}));
    }
    out.write_json(
        "prox_report.json",
        &json!({"problem": problem.name, "rows": rows, "failed_bounds": failed}),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("violated bounds: {}", failed.join(", "))))
    }
}

fn cmd_verify_lipschitz(spec: &RunSpec, seed: u64, out: &Output) -> CliResult {
    let problem = spec.problem()?;
    let reg = spec.regularizer()?;
    let mut rng = named_rng(seed, "cli/verify-lipschitz");
    let w = spec.box_half_width;
    let report = lipschitz_probe(&problem, &reg, spec.samples, -w, w, &mut rng)?;
    out.write_json("lipschitz_report.json", &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max ratio {:e} exceeds bound {:e}",
            report.max_ratio, report.bound
        )))
    }
}

fn cmd_rate(spec: &RunSpec, seed: u64, out: &Output) -> CliResult {
    let problem = spec.problem()?;
    let reg = spec.regularizer()?;
    let xbar = problem
        .known_minimizer
        .clone()
        .ok_or_else(|| Failure::Config(format!("problem {:?} has no known minimizer", problem.name)))?;
    let x0 = spec.start(problem.dimension(), seed)?;
    let outcome = solve(&problem, &reg, &x0, &spec.solver)?;
    let report = rate_report(&outcome.trace, &xbar)?;
    out.write_json(
        "rate_report.json",
        &json!({"status": outcome.status, "iterations": outcome.iterations(), "rate": report}),
    )
}

fn cmd_suite(seed: u64, out: &Output) -> CliResult {
    let outcomes = suite::run_suite(seed, &out.dir)?;
    for o in &outcomes {
        println!("{}", o.status_line());
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn run(cli: &Cli) -> CliResult {
    let spec = load_spec(cli.config.as_deref())?;
    spec.solver.validate()?;
    let out = Output::new(&cli.out)?;
    info!("{:?} seed {} -> {}", cli.command, cli.seed, cli.out.display());
    match cli.command {
        Command::Solve => cmd_solve(&spec, cli.seed, &out),
        Command::VerifyRegularizer => cmd_verify_regularizer(&spec, cli.seed, &out),
        Command::VerifyProx => cmd_verify_prox(&spec, cli.seed, &out),
        Command::VerifyLipschitz => cmd_verify_lipschitz(&spec, cli.seed, &out),
        Command::Rate => cmd_rate(&spec, cli.seed, &out),
        Command::Suite => cmd_suite(cli.seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_defaults() {
        let s = RunSpec::default();
        assert!(s.problem.is_none());
        assert_eq!(s.samples, 100);
        assert_eq!(s.epsilons.len(), 4);
    }

    #[test]
    fn named_and_document_problems() {
        let s: RunSpec = serde_json::from_str(r#"{"problem": "maxq"}"#).unwrap();
        assert_eq!(s.problem().unwrap().dimension(), 2);
        let s: RunSpec = serde_json::from_str(r#"{"problem": "nope"}"#).unwrap();
        assert!(matches!(s.problem(), Err(Failure::Config(_))));
        let s: RunSpec = serde_json::from_str(r#"{"problem": {"name": "a", "dimension": 1, "kind": "abs"}}"#).unwrap();
        assert_eq!(s.problem().unwrap().name, "a");
    }

    #[test]
    fn start_point() {
        let s: RunSpec = serde_json::from_str(r#"{"x0": [1, 2]}"#).unwrap();
        assert!(s.start(3, 0).is_err());
        assert_eq!(s.start(2, 0).unwrap(), DVector::from_column_slice(&[1.0, 2.0]));
        let r = RunSpec::default();
        assert_eq!(r.start(4, 9).unwrap(), r.start(4, 9).unwrap());
        assert!(r.start(4, 9).unwrap().amax() <= 10.0);
    }

    #[test]
    fn error_classes() {
        assert!(matches!(
            Failure::from(SolverError::Config("x".into())),
            Failure::Config(_)
        ));
        let lf = SolverError::LineSearchFailure {
            best_tau: 0.0,
            best_value: 0.0,
            backtracks: 1,
        };
        assert!(matches!(Failure::from(lf), Failure::Check(_)));
    }

    #[test]
    fn metric_regularizer_spec() {
        let r: RegularizerSpec = serde_json::from_str(r#"{"type":"metric","lambda":1,"M":[[2,0],[0,1]]}"#).unwrap();
        let reg = r.build().unwrap();
        assert_eq!(reg.dimension(), Some(2));
    }
}
