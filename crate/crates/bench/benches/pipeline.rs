use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rmmdp::explore::compute_qtilde;
use rmmdp::recovery::{compute_pair_bounds, recover_model, solve_magnitude_lp};
use rmmdp::{plan_discretized, plan_exact_small, EnvInstance};
use rmmdp_bench::{instance, params, saturated_stats};

fn qtilde(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_qtilde");
    for (s, a, h) in [(2, 2, 3), (3, 3, 4), (4, 3, 5)] {
        let model = instance(s, a, h);
        let p = params(&model);
        let stats = saturated_stats(&model, 1000);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{s}x{a}x{h}")), &stats, |b, st| {
            b.iter(|| compute_qtilde(black_box(st), &p))
        });
    }
    group.finish();
}

fn magnitude_lp(c: &mut Criterion) {
    let mut group = c.benchmark_group("magnitude_lp");
    for (s, a) in [(2, 2), (3, 3), (4, 3)] {
        let model = instance(s, a, 3);
        let p = params(&model);
        let bounds = compute_pair_bounds(&saturated_stats(&model, 1_000_000), &p);
        group.bench_with_input(BenchmarkId::from_parameter(format!("SA={}", s * a)), &bounds, |b, bd| {
            b.iter(|| solve_magnitude_lp(black_box(bd), &p))
        });
    }
    group.finish();
}

fn recovery(c: &mut Criterion) {
    let model = instance(3, 3, 3);
    let p = params(&model);
    let stats = saturated_stats(&model, 1_000_000);
    c.bench_function("recover_model/SA=9", |b| b.iter(|| recover_model(black_box(&stats), &p)));
}

fn planning(c: &mut Criterion) {
    let mut group = c.benchmark_group("planning");
    let model = instance(3, 2, 4);
    group.bench_function("exact_tree/3x2x4", |b| b.iter(|| plan_exact_small(black_box(&model))));
    for g in [16, 64, 256] {
        group.bench_with_input(BenchmarkId::new("discretized/3x2x4", g), &g, |b, &g| {
            b.iter(|| plan_discretized(black_box(&model), g))
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let model = instance(3, 2, 4);
    let policy = rmmdp::exact::OpenLoopPolicy(vec![0, 1, 0, 1]);
    c.bench_function("env/1000_episodes", |b| {
        b.iter(|| {
            let mut env = EnvInstance::new(model.clone(), 1);
            (0..1000).map(|_| env.run_episode(&policy).unwrap().total_reward()).sum::<u32>()
        })
    });
}

criterion_group!(benches, qtilde, magnitude_lp, recovery, planning, simulation);
criterion_main!(benches);
