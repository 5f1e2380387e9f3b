use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use haloforge::exec::{guided_chunks, static_chunks};
use haloforge::{
    compare_scaling, ExecConfig, GlobalGrid, InitialCondition, Mode, ModelKind, Problem, ScalingConstants,
    Simulation,
};

fn chunks(c: &mut Criterion) {
    c.bench_function("guided_chunks_4096_8", |b| b.iter(|| guided_chunks(black_box(4096), 8, 1)));
    c.bench_function("static_chunks_4096_8", |b| b.iter(|| static_chunks(black_box(4096), 8)));
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("advection_step_32");
    group.sample_size(10);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let p = Problem::new(
        ModelKind::Advection { velocity: [1.0; 3] },
        GlobalGrid::cube(32).unwrap(),
        InitialCondition::Sine,
        0.4,
    )
    .unwrap();
    for mode in [Mode::Optimized, Mode::Baseline] {
        let config = ExecConfig {
            mode,
            ..ExecConfig::new(1, threads)
        };
        let mut sim = Simulation::new(p.clone(), config).unwrap();
        group.bench_function(BenchmarkId::new(format!("{mode:?}"), threads), |b| b.iter(|| sim.step().unwrap()));
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let consts = ScalingConstants::default();
    let nodes = [16, 32, 64, 128, 256];
    c.bench_function("compare_scaling", |b| {
        b.iter(|| compare_scaling(28, 4, black_box(&consts), 1024, &nodes).unwrap())
    });
}

criterion_group!(benches, chunks, steps, model);
criterion_main!(benches);
