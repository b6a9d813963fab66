use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wed_bench::{double_well, ornstein_uhlenbeck, quadratic};
use wed_core::value::{finsler_distance, phi_finsler_field, FinslerOptions, ValueOptions};
use wed_core::{solve, value_function, EnergySpec, Point, SolverKind, SpaceSpec};

fn direct(c: &mut Criterion) {
    let mut g = c.benchmark_group("direct");
    for n in [1000, 4000, 16000] {
        let p = double_well(0.05, n);
        g.bench_with_input(BenchmarkId::new("double_well", n), &p, |b, p| b.iter(|| solve(black_box(p)).unwrap()));
    }
    g.sample_size(10);
    let ou = ornstein_uhlenbeck(64, 4000);
    g.bench_function("quantile_m64", |b| b.iter(|| solve(black_box(&ou)).unwrap()));
    g.finish();
}

fn euler_lagrange(c: &mut Criterion) {
    let mut g = c.benchmark_group("euler_lagrange");
    for n in [1000, 4000, 16000] {
        let p = quadratic(0.1, n).with_solver(SolverKind::EulerLagrange);
        g.bench_with_input(BenchmarkId::new("quadratic", n), &p, |b, p| b.iter(|| solve(black_box(p)).unwrap()));
    }
    g.finish();
}

fn value(c: &mut Criterion) {
    let space = SpaceSpec::Euclidean { dim: 1 };
    let energy = EnergySpec::double_well();
    let opts = ValueOptions { cache_capacity: 0, ..ValueOptions::default() };
    c.bench_function("value_function/double_well", |b| {
        b.iter(|| value_function(&space, &energy, black_box(&Point::scalar(0.5)), 0.05, &opts).unwrap())
    });
}

fn finsler(c: &mut Criterion) {
    let space = SpaceSpec::Euclidean { dim: 2 };
    let energy = EnergySpec::double_well();
    let (a, b) = (Point::new(vec![-2.0, 0.0]), Point::new(vec![1.5, 1.0]));
    let mut g = c.benchmark_group("finsler");
    g.sample_size(10);
    g.bench_function("double_well_2d", |bch| {
        bch.iter(|| finsler_distance(&space, phi_finsler_field(&energy), &a, &b, &FinslerOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, direct, euler_lagrange, value, finsler);
criterion_main!(benches);
