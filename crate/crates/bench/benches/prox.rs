use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use phireg::{inexact_prox, make_problem_suite, quadratic_regularizer, ProxBackend, ProxOptions};
use phireg_bench::grid_points;

fn prox_backends(c: &mut Criterion) {
    let reg = quadratic_regularizer(1.0).unwrap();
    let mut group = c.benchmark_group("inexact_prox");
    for problem in make_problem_suite() {
        let points = grid_points(problem.dimension(), 16, 5.0);
        let mut backends = vec![ProxBackend::Bundle];
        if problem.has_closed_form(&reg) {
            backends.push(ProxBackend::ClosedForm);
        }
        for backend in backends {
            let opts = ProxOptions {
                backend,
                ..ProxOptions::default()
            };
            for eps in [1e-2, 1e-6] {
                let id = BenchmarkId::new(format!("{}/{backend:?}", problem.name), eps);
                group.bench_with_input(id, &eps, |b, &eps| {
                    b.iter(|| {
                        for x in &points {
                            black_box(inexact_prox(&problem, &reg, x, eps, &opts).unwrap());
                        }
                    })
                });
            }
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = prox_backends
}
criterion_main!(benches);
