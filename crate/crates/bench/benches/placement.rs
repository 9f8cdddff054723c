use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use pmu_bench::network;
use pmu_core::convex::{epsilon_select, linearize, mse_surrogate, solve_subproblem, SubproblemSpec};
use pmu_core::placement::{SwapObjective, TraceSwap};
use pmu_core::{
    min_pmu_blp, monte_carlo_mse, BlpOptions, ConstraintKind, IeeeCase, Placement,
};

fn swap_scan(c: &mut Criterion) {
    let net = network(IeeeCase::Ieee118);
    let mut obj = TraceSwap::new(&net.problem).unwrap();
    let support: Vec<usize> = (0..118).step_by(3).collect();
    obj.reset(&support).unwrap();
    let outside: Vec<usize> = (0..118).filter(|k| k % 3 != 0).collect();
    c.bench_function("ieee118 trace swap, one out, all in", |b| {
        b.iter(|| {
            outside
                .iter()
                .map(|&k| obj.eval_swap(support[7], k).unwrap())
                .fold(f64::INFINITY, f64::min)
        })
    });
}

fn branch_and_bound(c: &mut Criterion) {
    let grid = IeeeCase::Ieee118.load().unwrap();
    let mut group = c.benchmark_group("ieee118 minimum PMU");
    group.sample_size(20);
    for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
        let constraint = pmu_core::ObservabilityConstraint::for_grid(kind, &grid);
        group.bench_function(kind.name(), |b| {
            b.iter(|| min_pmu_blp(&constraint, &BlpOptions::default()).unwrap().s_min)
        });
    }
    group.finish();
}

fn penalized_subproblem(c: &mut Criterion) {
    let net = network(IeeeCase::Ieee57);
    let constraint = net.constraint(ConstraintKind::Complete);
    let shift = epsilon_select(&net.problem).unwrap();
    let s = 25.0;
    let x_bar = vec![s / 57.0; 57];
    let sur = mse_surrogate(&net.problem, &shift, &x_bar).unwrap();
    let lin = linearize(&x_bar, 1.5);
    let spec = SubproblemSpec {
        coeffs: &sur.per_bus,
        epsilon: shift.epsilon,
        mu: 1.0,
        minorant: Some(&lin),
        constraint: &constraint,
        relaxation: 0.0,
        budget: s,
    };
    let mut group = c.benchmark_group("ieee57 penalized iteration");
    group.sample_size(20);
    group.bench_function("surrogate", |b| {
        b.iter(|| mse_surrogate(&net.problem, &shift, &x_bar).unwrap().constant)
    });
    group.bench_function("subproblem", |b| {
        b.iter_batched(|| x_bar.clone(), |x| solve_subproblem(&spec, &x).unwrap().objective, BatchSize::SmallInput)
    });
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let net = network(IeeeCase::Ieee30);
    let placement = Placement::from_support(30, &[0, 1, 5, 8, 9, 11, 12, 18, 22, 25]).unwrap();
    let mut group = c.benchmark_group("ieee30 Monte Carlo");
    group.sample_size(10);
    group.bench_function("1000 samples", |b| {
        b.iter(|| monte_carlo_mse(&net.problem, &placement, 1000, 1).unwrap().empirical_mse)
    });
    group.finish();
}

criterion_group!(benches, swap_scan, branch_and_bound, penalized_subproblem, monte_carlo);
criterion_main!(benches);
