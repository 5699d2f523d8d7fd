//! Throughput of the Monte-Carlo harness, sequential versus rayon, plus the
//! cost of the analytic phase gradient against its finite-difference oracle.
//!
//! Run with `cargo bench -p risrank-core`; pass `--no-default-features` to
//! measure the sequential-only build.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use risrank_core::effective_rank::{effrank_phase_gradient, finite_difference_gradient};
use risrank_core::evaluation::{
    run_monte_carlo_sequential, RisMode, SimulationConfig, SweepSpec, SweepVariable,
};
use risrank_core::optimizer::OptimizerConfig;
use risrank_core::testing;

fn bench_config() -> SimulationConfig {
    SimulationConfig {
        realizations: 16,
        sweep: SweepSpec {
            variable: SweepVariable::SnrDb,
            values: vec![10.0],
        },
        ris_mode: RisMode::Optimized,
        optimizer: OptimizerConfig {
            max_outer: 8,
            max_inner: 50,
            ..OptimizerConfig::default()
        },
        ..SimulationConfig::defaults()
    }
}

fn monte_carlo(c: &mut Criterion) {
    let cfg = bench_config();
    let mut group = c.benchmark_group("monte_carlo_16_realizations");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| run_monte_carlo_sequential(black_box(&cfg)).unwrap())
    });
    #[cfg(feature = "parallel")]
    group.bench_function("rayon", |b| {
        b.iter(|| risrank_core::evaluation::run_monte_carlo_parallel(black_box(&cfg)).unwrap())
    });
    group.finish();
}

fn phase_gradient(c: &mut Criterion) {
    let (ch, phases, rx) = testing::random_instance(42, 4, 3, 32, false, 10.0);
    let mut group = c.benchmark_group("phase_gradient_n32");
    group.bench_function("analytic", |b| {
        b.iter(|| effrank_phase_gradient(black_box(&ch), black_box(&phases), black_box(&rx)))
    });
    group.bench_function("finite_difference", |b| {
        b.iter(|| {
            finite_difference_gradient(black_box(&ch), black_box(&phases), black_box(&rx), 1e-6)
        })
    });
    group.finish();
}

criterion_group!(benches, monte_carlo, phase_gradient);
criterion_main!(benches);
