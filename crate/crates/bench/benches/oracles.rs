use avgpg::mdp::{analyze, differential_values, exact_policy_gradient, npg_direction};
use avgpg_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn oracles(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracles");
    for &(n_s, n_a) in &[(6, 4), (25, 4), (64, 4)] {
        let (mdp, policy) = fixture(n_s, n_a, 7);
        let id = format!("{n_s}x{n_a}");
        group.bench_with_input(BenchmarkId::new("differential_values", &id), &(), |b, _| {
            b.iter(|| differential_values(black_box(&mdp), black_box(&policy)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exact_gradient", &id), &(), |b, _| {
            b.iter(|| exact_policy_gradient(black_box(&mdp), black_box(&policy)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("npg_direction", &id), &(), |b, _| {
            b.iter(|| npg_direction(black_box(&mdp), black_box(&policy)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("analyze", &id), &(), |b, _| {
            b.iter(|| analyze(black_box(&mdp), black_box(&policy)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, oracles);
criterion_main!(benches);
