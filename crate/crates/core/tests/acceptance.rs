//! Acceptance criteria. Each test prints one PASS/FAIL line.
//!
//! Run with `cargo test -p phireg-core --test acceptance -- --nocapture`
//! to see the lines.

use std::fs;
use std::path::Path;

use phireg::suite::{self, CriterionOutcome, DEFAULT_SEED};

fn check(outcome: phireg::Result<CriterionOutcome>) {
    let o = outcome.expect("criterion ran");
    println!("{}", o.status_line());
    assert!(
        o.passed,
        "{}\n{}",
        o.status_line(),
        serde_json::to_string_pretty(&o.report).unwrap()
    );
}

#[test]
fn criterion_1_regularizer_axioms() {
    check(suite::criterion_1(DEFAULT_SEED));
}

#[test]
fn criterion_2_moreau_consistency() {
    check(suite::criterion_2(DEFAULT_SEED));
}

#[test]
fn criterion_3_certificate_bounds() {
    check(suite::criterion_3(DEFAULT_SEED));
}

#[test]
fn criterion_4_envelope_lipschitz() {
    check(suite::criterion_4(DEFAULT_SEED));
}

#[test]
fn criterion_5_optimality_certificates() {
    check(suite::criterion_5(DEFAULT_SEED));
}

#[test]
fn criterion_6_global_convergence() {
    check(suite::criterion_6(DEFAULT_SEED));
}

#[test]
fn criterion_7_superlinear_rate() {
    check(suite::criterion_7(DEFAULT_SEED));
}

#[test]
fn criterion_8_window_mechanics() {
    check(suite::criterion_8(DEFAULT_SEED));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_9_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = suite::run_suite(DEFAULT_SEED, a.path()).unwrap();
    suite::run_suite(DEFAULT_SEED, b.path()).unwrap();
    let fa = read_all(a.path());
    let fb = read_all(b.path());
    assert_eq!(fa.len(), 10);
    let identical = fa == fb;
    let in_run = first.last().unwrap();
    let line = format!(
        "criterion 9 determinism: {} (files compared = {}, in-run check {})",
        if identical && in_run.passed { "PASS" } else { "FAIL" },
        fa.len(),
        if in_run.passed { "pass" } else { "fail" }
    );
    println!("{line}");
    assert!(identical && in_run.passed, "{line}");
}

#[test]
fn statuses_are_seed_robust() {
    for seed in [1, 77, 4242] {
        for o in suite::run_criteria(seed).unwrap() {
            assert!(o.passed, "seed {seed}: {}", o.status_line());
        }
    }
}
