use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use resalloc_bench::{cycle_input, scale_free_input};
use resalloc_core::dynamics::{rhs, run, ProtocolSpec, RunOptions};
use resalloc_core::oracle::solve_kkt;

fn bench_rhs(c: &mut Criterion) {
    let input = scale_free_input(1);
    let spec = ProtocolSpec::combined(1.0, 0.05, 0.2, 2.0).unwrap();
    c.bench_function("rhs combined n=100 scale-free", |b| {
        b.iter(|| {
            rhs(
                black_box(&spec),
                black_box(&input.graph),
                std::slice::from_ref(&input.costs),
                black_box(&input.x),
            )
            .unwrap()
        })
    });
}

fn bench_run_segment(c: &mut Criterion) {
    let (schedule, costs, x0) = cycle_input(1);
    let spec = ProtocolSpec::combined(0.04, 0.015, 0.1, 1.6).unwrap();
    let opts = RunOptions::new(1e-5, 0.01, 200); // 1000 steps
    c.bench_function("run 1000 steps n=10 cycle", |b| {
        b.iter(|| {
            run(
                black_box(&spec),
                black_box(&schedule),
                std::slice::from_ref(&costs),
                black_box(&x0),
                &opts,
            )
            .unwrap()
        })
    });
}

fn bench_oracle(c: &mut Criterion) {
    let input = scale_free_input(2);
    c.bench_function("solve_kkt n=100 quadlse", |b| {
        b.iter(|| solve_kkt(black_box(&input.costs), black_box(4.0)).unwrap())
    });
}

criterion_group!(benches, bench_rhs, bench_run_segment, bench_oracle);
criterion_main!(benches);
