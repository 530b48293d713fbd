use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use phireg::driver::EpsMode;
use phireg::{make_problem_suite, quadratic_regularizer, solve, SolverConfig};
use phireg_bench::grid_points;

fn solve_suite(c: &mut Criterion) {
    let reg = quadratic_regularizer(1.0).unwrap();
    let mut group = c.benchmark_group("solve");
    for (label, eps_mode) in [("halving", EpsMode::Halving), ("superlinear", EpsMode::Superlinear)] {
        let cfg = SolverConfig {
            eps_mode,
            ..SolverConfig::default()
        };
        for problem in make_problem_suite() {
            let x0 = grid_points(problem.dimension(), 1, 10.0).remove(0);
            group.bench_function(format!("{}/{label}", problem.name), |b| {
                b.iter(|| black_box(solve(&problem, &reg, &x0, &cfg).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = solve_suite
}
criterion_main!(benches);
