//! Parallel vs sequential execution of the benchmark trial loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rescore_core::harness::{
    run_benchmark_with_mode, BenchConfig, MethodSpec, NoiseConfig, Scenario, SemKind,
};
use rescore_core::learners::Backbone;
use rescore_core::parallel::Parallelism;
use rescore_core::GraphKind;

fn bench_config(trials: usize, d: usize, n: usize) -> BenchConfig {
    BenchConfig {
        scenarios: vec![Scenario {
            id: None,
            graph: GraphKind::Er,
            k: 2,
            d,
            sem: SemKind::Linear,
            n,
            noise: NoiseConfig::Homo,
            methods: vec![MethodSpec::Fit {
                backbone: Backbone::Notears,
                lambda: Some(0.1),
                thresh: None,
                acyclicity: None,
                rescore: None,
                label: None,
            }],
            trials,
            base_seed: 42,
            lambda_sweep: None,
        }],
        out_dir: None,
    }
}

fn trial_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("bench_trials");
    group.sample_size(10);
    for (trials, d, n) in [(4usize, 6usize, 300usize), (8, 8, 500)] {
        let cfg = bench_config(trials, d, n);
        group.bench_with_input(
            BenchmarkId::new("parallel", format!("t{trials}_d{d}_n{n}")),
            &cfg,
            |b, cfg| {
                b.iter(|| run_benchmark_with_mode(cfg, None, Parallelism::Parallel).unwrap());
            },
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("t{trials}_d{d}_n{n}")),
            &cfg,
            |b, cfg| {
                b.iter(|| run_benchmark_with_mode(cfg, None, Parallelism::Sequential).unwrap());
            },
        );
    }
    group.finish();
}

criterion_group!(benches, trial_loop);
criterion_main!(benches);
