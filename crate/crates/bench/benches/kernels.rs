use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use haloforge::exec::halo_exchange;
use haloforge::physics::{rhs, weno5_left};
use haloforge::{FieldBlock, GlobalGrid, InitialCondition, ModelKind, Problem, RankLayout};

fn weno(c: &mut Criterion) {
    let u = [0.1, 0.4, 0.35, 0.9, 1.2];
    c.bench_function("weno5_left", |b| b.iter(|| weno5_left(black_box(u))));
}

/// A filled single-rank block of the given problem.
fn block_of(problem: &Problem) -> FieldBlock {
    let n = problem.grid.n;
    let mut b = FieldBlock::new(problem.model, n, problem.grid.halo);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for (v, x) in problem.initial_state([i, j, k]).unwrap().into_iter().enumerate() {
                    b.set_owned(v, i, j, k, x);
                }
            }
        }
    }
    let layout = RankLayout::for_grid(1, &problem.grid).unwrap();
    let mut blocks = [b];
    halo_exchange(&layout, &mut blocks, 0).unwrap();
    let [b] = blocks;
    b
}

fn operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    group.sample_size(20);
    let cases = [
        ("advection", ModelKind::Advection { velocity: [1.0; 3] }, InitialCondition::Sine),
        ("mhd", ModelKind::IdealMhd { gamma: 5.0 / 3.0 }, InitialCondition::Smooth),
    ];
    for (name, model, ic) in cases {
        let p = Problem::new(model, GlobalGrid::cube(24).unwrap(), ic, 0.4).unwrap();
        let b = block_of(&p);
        let spacing = p.grid.spacing();
        group.bench_function(BenchmarkId::new(name, 24), |bench| {
            bench.iter(|| rhs(black_box(&b), spacing, [3.0; 3]).unwrap())
        });
    }
    group.finish();
}

fn halo(c: &mut Criterion) {
    let mut group = c.benchmark_group("halo_exchange");
    let p = Problem::new(
        ModelKind::IdealMhd { gamma: 5.0 / 3.0 },
        GlobalGrid::cube(32).unwrap(),
        InitialCondition::Smooth,
        0.4,
    )
    .unwrap();
    for ranks in [1, 8] {
        let layout = RankLayout::for_grid(ranks, &p.grid).unwrap();
        let mut blocks: Vec<_> = (0..ranks)
            .map(|r| {
                let s = layout.subdomain(&p.grid, r).unwrap();
                FieldBlock::new(p.model, s.count, p.grid.halo)
            })
            .collect();
        group.bench_function(BenchmarkId::from_parameter(ranks), |b| {
            b.iter(|| halo_exchange(&layout, &mut blocks, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, weno, operator, halo);
criterion_main!(benches);
