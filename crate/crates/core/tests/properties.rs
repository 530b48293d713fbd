use nalgebra::DVector;
use proptest::prelude::*;

use phireg::driver::{merit_bound_excess, EpsMode};
use phireg::regularizer::{exact_envelope, lipschitz_of_envelope};
use phireg::{
    abs_problem, inexact_prox, l1_problem, maxq_problem, quadratic_regularizer, solve, ProxBackend, ProxOptions,
    SolveStatus, SolverConfig,
};

fn point(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0..5.0f64, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certificate_brackets_the_envelope(x in point(2), log_eps in -6.0..-1.0f64, lambda in 0.25..4.0f64) {
        let eps = 10f64.powf(log_eps);
        let reg = quadratic_regularizer(lambda).unwrap();
        let p = maxq_problem(2);
        let opts = ProxOptions { backend: ProxBackend::Bundle, ..ProxOptions::default() };
        let cert = inexact_prox(&p, &reg, &x, eps, &opts).unwrap();
        let exact = exact_envelope(&p, &reg, &x, 1e-12).unwrap();
        let tol = 1e-10 * (1.0 + exact.f_phi.abs());
        prop_assert!(cert.lower_bound <= exact.f_phi + tol);
        prop_assert!(cert.f_phi_a >= exact.f_phi - tol);
        prop_assert!(cert.f_phi_a <= exact.f_phi + eps + tol);
        prop_assert!(cert.gap() <= eps);
    }

    #[test]
    fn envelope_gradient_is_lipschitz(x in point(5), y in point(5), lambda in 0.25..4.0f64) {
        let reg = quadratic_regularizer(lambda).unwrap();
        let p = l1_problem(5);
        let gx = exact_envelope(&p, &reg, &x, 1e-12).unwrap().grad;
        let gy = exact_envelope(&p, &reg, &y, 1e-12).unwrap().grad;
        let bound = lipschitz_of_envelope(&reg) * (x - &y).norm();
        prop_assert!((gx - gy).norm() <= bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn envelope_never_exceeds_objective(x in -20.0..20.0f64, lambda in 0.1..10.0f64) {
        let reg = quadratic_regularizer(lambda).unwrap();
        let xv = DVector::from_element(1, x);
        let env = exact_envelope(&abs_problem(), &reg, &xv, 1e-12).unwrap();
        prop_assert!(env.f_phi <= x.abs() + 1e-12);
        prop_assert!(env.f_phi >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_reaches_l1_minimum(x0 in prop::collection::vec(-10.0..10.0f64, 5), superlinear in any::<bool>()) {
        let cfg = SolverConfig {
            eps_mode: if superlinear { EpsMode::Superlinear } else { EpsMode::Halving },
            ..SolverConfig::default()
        };
        let reg = quadratic_regularizer(1.0).unwrap();
        let out = solve(&l1_problem(5), &reg, &DVector::from_vec(x0), &cfg).unwrap();
        prop_assert_eq!(out.status, SolveStatus::Converged);
        prop_assert!(out.final_x().amax() <= 1e-6);
        prop_assert!(merit_bound_excess(&out.trace) <= 0.0);
        for r in &out.trace {
            if let Some(s) = &r.step {
                prop_assert!(s.slope < 0.0);
                prop_assert!(s.m <= cfg.linesearch.window);
            }
        }
    }
}
