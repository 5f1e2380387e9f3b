//! Self-checks behind `halo verify` and the acceptance test target.
//!
//! Each check recomputes its expectation independently of the code under
//! test (brute force, closed forms, single-rank or single-thread oracles)
//! and sizes stay at or below 64^3.

use std::f64::consts::PI;
use std::time::Instant;

use haloforge::exec::{guided_chunks, halo_exchange, ordered_reduce, static_chunks, ReduceOp};
use haloforge::grid::{decompose, halo_area, local_extent, neighbor_table, DEFAULT_HALO};
use haloforge::model::{compare_scaling, CalibrationTarget};
use haloforge::perf::{speedup, REGION_RHS};
use haloforge::physics::{
    cfl_dt, cons_to_prim, divb_diagnostic, max_signal_speed, mhd_flux, prim_to_cons, rhs, rk3_step, weno5_left,
    weno5_right, PhysicsError, Primitive,
};
use haloforge::{
    amdahl, run, serial_fraction, sweet_spot, ExecConfig, ExecError, FieldBlock, GlobalField, GlobalGrid,
    InitialCondition, MetricsReport, Mode, ModelKind, Problem, RankBackend, RankLayout, ScalingConstants,
    Schedule, Simulation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{parse_timings, speedup_table};

/// The six timings of the compiler A/B table shipped with the repository.
pub const COMPILER_TIMINGS_CSV: &str = include_str!("../../../data/compiler_timings.csv");

const GAMMA: f64 = 5.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            detail: detail.into(),
            seconds: 0.0,
        }
    }

    pub fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome: Outcome::Skip,
            detail: detail.into(),
            seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome != Outcome::Fail
    }

    pub fn line(&self) -> String {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        format!("{tag}  {:<34} {} ({:.2}s)", self.name, self.detail, self.seconds)
    }
}

/// Runs `f`, timing it and turning errors into failures.
fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String), String>) -> Check {
    let start = Instant::now();
    let mut c = match f() {
        Ok((ok, detail)) => Check::new(name, ok, detail),
        Err(e) => Check::new(name, false, format!("error: {e}")),
    };
    c.seconds = start.elapsed().as_secs_f64();
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Grid,
    Physics,
    Exec,
    Perf,
    Model,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Grid, Suite::Physics, Suite::Exec, Suite::Perf, Suite::Model];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Grid => "grid",
            Suite::Physics => "physics",
            Suite::Exec => "exec",
            Suite::Perf => "perf",
            Suite::Model => "model",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Runs every check of `suite`, reporting each one as it finishes.
pub fn run_suite(suite: Suite, on_check: &mut dyn FnMut(&Check)) -> Vec<Check> {
    let checks: Vec<Box<dyn Fn() -> Check>> = match suite {
        Suite::Grid => vec![
            Box::new(check_decompose_examples),
            Box::new(check_local_extent),
            Box::new(check_tiling),
            Box::new(check_minimality),
            Box::new(check_neighbor_symmetry),
        ],
        Suite::Physics => vec![
            Box::new(check_convert),
            Box::new(check_flux_and_speed),
            Box::new(check_weno),
            Box::new(check_uniform_rhs),
            Box::new(check_telescoping),
            Box::new(check_rk3),
            Box::new(check_cfl),
            Box::new(check_divb),
            Box::new(check_positivity_guard),
        ],
        Suite::Exec => vec![
            Box::new(check_chunks),
            Box::new(check_reduce),
            Box::new(check_halo_oracle),
            Box::new(|| check_zero_steps(16)),
            Box::new(|| check_determinism(&MatrixSpec::default())),
            Box::new(|| check_oracle_equivalence(32, &[2, 4, 8])),
            Box::new(|| check_convergence(&ConvergenceSpec::default(), 4.5)),
            Box::new(|| check_conservation(&ConservationSpec::default(), 1e-11, 10.0)),
        ],
        Suite::Perf => vec![
            Box::new(check_amdahl),
            Box::new(check_serial_fraction),
            Box::new(|| check_compiler_improvements(COMPILER_TIMINGS_CSV, &[12.4, 15.8, 16.3], 0.1)),
        ],
        Suite::Model => vec![
            Box::new(|| check_sweet_spots(&ScalingConstants::default())),
            Box::new(|| check_comm_ratio(&ScalingConstants::default(), 2.0)),
            Box::new(check_sweet_spot_monotone),
        ],
    };
    checks
        .into_iter()
        .map(|f| {
            let c = f();
            on_check(&c);
            c
        })
        .collect()
}

// ---- grid ------------------------------------------------------------

fn cube(n: usize) -> GlobalGrid {
    GlobalGrid::cube(n).expect("positive size")
}

/// Admissible ordered factor triples of `p`, by exhaustive search.
fn factor_triples(p: usize, n: [usize; 3], w: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 1..=p {
        for b in 1..=p {
            for c in 1..=p {
                if a * b * c == p && [a, b, c].iter().zip(n).all(|(&q, m)| m / q >= 2 * w) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn brute_area(d: [usize; 3], n: [usize; 3], w: usize) -> f64 {
    let q: [f64; 3] = std::array::from_fn(|a| n[a] as f64 / d[a] as f64);
    let w = w as f64;
    let mut area = 0.0;
    for a in 0..3 {
        if d[a] > 1 {
            area += 2.0 * w * q[(a + 1) % 3] * q[(a + 2) % 3];
        }
    }
    area
}

pub fn check_decompose_examples() -> Check {
    timed("grid.decompose_examples", || {
        let a = decompose(1, &cube(16)).map_err(|e| e.to_string())?;
        let b = decompose(8, &cube(64)).map_err(|e| e.to_string())?;
        let g = GlobalGrid::new([256, 64, 64]).map_err(|e| e.to_string())?;
        let c = decompose(4, &g).map_err(|e| e.to_string())?;
        let too_small = decompose(8, &cube(8)).is_err();
        let ok = a == [1, 1, 1] && b == [2, 2, 2] && c == [4, 1, 1] && too_small;
        Ok((ok, format!("P=1 {a:?}, P=8 64^3 {b:?}, P=4 256x64x64 {c:?}")))
    })
}

pub fn check_local_extent() -> Check {
    timed("grid.local_extent", || {
        let split: Vec<(usize, usize)> = (0..3).map(|c| local_extent(10, 3, c).unwrap()).collect();
        let even: Vec<usize> = (0..4).map(|c| local_extent(12, 4, c).unwrap().1).collect();
        let ok = split == [(0, 4), (4, 3), (7, 3)]
            && even == [3; 4]
            && local_extent(10, 1, 0) == Ok((0, 10))
            && local_extent(10, 3, 3).is_err();
        Ok((ok, format!("n=10 p=3 -> {split:?}")))
    })
}

pub fn check_tiling() -> Check {
    timed("grid.tiling", || {
        let grids = [[64, 64, 64], [96, 40, 28], [30, 50, 70]];
        let mut checked = 0;
        for n in grids {
            let grid = GlobalGrid::new(n).map_err(|e| e.to_string())?;
            for p in 1..=64 {
                let Ok(layout) = RankLayout::for_grid(p, &grid) else { continue };
                let mut marks = vec![0u8; n.iter().product()];
                for r in 0..p {
                    let s = layout.subdomain(&grid, r).map_err(|e| e.to_string())?;
                    for k in s.offset[2]..s.offset[2] + s.count[2] {
                        for j in s.offset[1]..s.offset[1] + s.count[1] {
                            for i in s.offset[0]..s.offset[0] + s.count[0] {
                                marks[(k * n[1] + j) * n[0] + i] += 1;
                            }
                        }
                    }
                }
                if marks.iter().any(|&m| m != 1) {
                    return Ok((false, format!("P={p} on {n:?} does not tile")));
                }
                checked += 1;
            }
        }
        Ok((true, format!("{checked} layouts tile exactly")))
    })
}

pub fn check_minimality() -> Check {
    timed("grid.minimality", || {
        let grids = [[128, 128, 128], [128, 64, 32], [40, 96, 128], [64, 64, 64], [24, 24, 24]];
        let w = DEFAULT_HALO;
        let mut checked = 0;
        for n in grids {
            let grid = GlobalGrid::new(n).map_err(|e| e.to_string())?;
            for p in 1..=64 {
                let best = factor_triples(p, n, w)
                    .into_iter()
                    .map(|d| brute_area(d, n, w))
                    .min_by(f64::total_cmp);
                match (decompose(p, &grid), best) {
                    (Ok(d), Some(min)) => {
                        let got = halo_area(d, &grid);
                        if (got - min).abs() > 1e-9 * min.max(1.0) {
                            return Ok((false, format!("P={p} {n:?}: {d:?} area {got} vs minimum {min}")));
                        }
                    }
                    (Err(_), None) => {}
                    (got, best) => {
                        return Ok((false, format!("P={p} {n:?}: decompose {got:?}, brute force {best:?}")));
                    }
                }
                checked += 1;
            }
        }
        Ok((true, format!("{checked} (P, grid) pairs match brute force")))
    })
}

pub fn check_neighbor_symmetry() -> Check {
    timed("grid.neighbor_symmetry", || {
        let mut dims_list = vec![[1, 1, 1], [2, 1, 1], [2, 2, 1], [3, 1, 2], [4, 3, 5]];
        dims_list.extend((1..=64).filter_map(|p| decompose(p, &cube(128)).ok()));
        for dims in &dims_list {
            let t = neighbor_table(*dims, [true; 3]).map_err(|e| e.to_string())?;
            for (a, row) in t.iter().enumerate() {
                for axis in 0..3 {
                    if t[row[2 * axis + 1]][2 * axis] != a || t[row[2 * axis]][2 * axis + 1] != a {
                        return Ok((false, format!("{dims:?}: rank {a} axis {axis}")));
                    }
                }
            }
        }
        let pair = neighbor_table([2, 1, 1], [true; 3]).map_err(|e| e.to_string())?;
        let single = neighbor_table([1, 1, 1], [true; 3]).map_err(|e| e.to_string())?;
        let ok = pair[0][0] == 1 && pair[0][1] == 1 && single[0] == [0; 6];
        Ok((ok, format!("{} layouts symmetric", dims_list.len())))
    })
}

// ---- physics ---------------------------------------------------------

fn random_primitive(rng: &mut ChaCha8Rng) -> Primitive {
    Primitive {
        rho: rng.random_range(0.1..10.0),
        v: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        p: rng.random_range(0.1..10.0),
        b: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
    }
}

pub fn check_convert() -> Check {
    timed("physics.convert_round_trip", || {
        let rest = Primitive {
            rho: 1.0,
            v: [0.0; 3],
            p: 1.0,
            b: [0.0; 3],
        };
        let u = prim_to_cons(&rest, GAMMA).map_err(|e| e.to_string())?;
        let mut ok = (u[4] - 1.5).abs() <= 1e-12 && u[1..4] == [0.0; 3];
        ok &= (cons_to_prim(&u, GAMMA).map_err(|e| e.to_string())?.p - 1.0).abs() <= 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let w = random_primitive(&mut rng);
            let back = cons_to_prim(&prim_to_cons(&w, GAMMA).map_err(|e| e.to_string())?, GAMMA)
                .map_err(|e| e.to_string())?;
            let pairs = [(w.rho, back.rho), (w.p, back.p)]
                .into_iter()
                .chain(w.v.into_iter().zip(back.v))
                .chain(w.b.into_iter().zip(back.b));
            for (a, b) in pairs {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        ok &= worst <= 1e-12;
        Ok((ok, format!("E(rest) = {}, worst relative round-trip error {worst:.2e}", u[4])))
    })
}

pub fn check_flux_and_speed() -> Check {
    timed("physics.flux_and_signal_speed", || {
        let rest = Primitive {
            rho: 1.0,
            v: [0.0; 3],
            p: 1.0,
            b: [0.0; 3],
        };
        let f = mhd_flux(&rest, GAMMA, 0);
        let mut ok = f == [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let w = random_primitive(&mut rng);
            for axis in 0..3 {
                ok &= mhd_flux(&w, GAMMA, axis)[5 + axis] == 0.0;
            }
        }
        let sound = GAMMA.sqrt();
        let s0 = max_signal_speed(&rest, GAMMA, 0);
        let bx = Primitive { b: [1.0, 0.0, 0.0], ..rest };
        let s1 = max_signal_speed(&bx, GAMMA, 0);
        let moving = Primitive { v: [2.0, 0.0, 0.0], ..bx };
        let s2 = max_signal_speed(&moving, GAMMA, 0);
        ok &= (s0 - sound).abs() < 1e-12 && (s1 - sound).abs() < 1e-12 && (s2 - s1 - 2.0).abs() < 1e-12;
        let adv = ModelKind::Advection { velocity: [1.0, 0.0, 0.0] };
        let mut fl = [0.0; 3];
        adv.fluxes(&[2.0], &mut fl).map_err(|e| e.to_string())?;
        ok &= fl[0] == 2.0;
        Ok((ok, format!("lambda(rest) = {s0:.5}, lambda(Bx=1) = {s1:.5}")))
    })
}

/// Interface error of the left-biased reconstruction of `sin` from cell
/// averages of width `dx`, maximized over one period.
fn weno_error(dx: f64) -> f64 {
    let avg = |c: f64| ((c - dx / 2.0).cos() - (c + dx / 2.0).cos()) / dx;
    let cells = (2.0 * PI / dx).round() as usize;
    (0..cells)
        .map(|i| {
            let x = i as f64 * dx;
            let u = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|o| avg(x + o * dx));
            (weno5_left(u) - (x + dx / 2.0).sin()).abs()
        })
        .fold(0.0, f64::max)
}

pub fn check_weno() -> Check {
    timed("physics.weno5", || {
        let mut ok = weno5_left([2.5; 5]) == 2.5 && weno5_right([-1.0; 5]) == -1.0;
        ok &= (weno5_left([1.0, 2.0, 3.0, 4.0, 5.0]) - 3.5).abs() < 1e-12;
        ok &= (weno5_right([5.0, 4.0, 3.0, 2.0, 1.0]) - 3.5).abs() < 1e-12;
        let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dx| weno_error(dx)).collect();
        let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
        ok &= orders.iter().all(|&o| o > 4.5);
        Ok((ok, format!("orders {orders:.2?}")))
    })
}

fn mhd() -> ModelKind {
    ModelKind::IdealMhd { gamma: GAMMA }
}

/// A block of `n^3` cells filled from `f(x)` with periodic ghosts.
fn periodic_block(model: ModelKind, n: usize, mut f: impl FnMut([f64; 3]) -> Vec<f64>) -> Result<FieldBlock, String> {
    let grid = cube(n);
    let mut b = FieldBlock::new(model, [n; 3], grid.halo);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let x = [i, j, k].map(|c| (c as f64 + 0.5) / n as f64);
                for (v, val) in f(x).into_iter().enumerate() {
                    b.set_owned(v, i, j, k, val);
                }
            }
        }
    }
    let layout = RankLayout::for_grid(1, &grid).map_err(|e| e.to_string())?;
    let mut blocks = [b];
    halo_exchange(&layout, &mut blocks, 0).map_err(|e| e.to_string())?;
    let [b] = blocks;
    Ok(b)
}

pub fn check_uniform_rhs() -> Check {
    timed("physics.uniform_rhs_zero", || {
        let w = Primitive {
            rho: 1.3,
            v: [0.3, -0.2, 0.1],
            p: 0.7,
            b: [0.5, 0.25, -0.4],
        };
        let u = prim_to_cons(&w, GAMMA).map_err(|e| e.to_string())?.to_vec();
        let b = periodic_block(mhd(), 8, |_| u.clone())?;
        let l = rhs(&b, [0.125; 3], [3.0; 3]).map_err(|e| e.to_string())?;
        let a = periodic_block(ModelKind::Advection { velocity: [1.0, -2.0, 0.5] }, 8, |_| vec![0.7])?;
        let la = rhs(&a, [0.125; 3], [2.0; 3]).map_err(|e| e.to_string())?;
        let ok = l.iter().chain(&la).all(|&x| x == 0.0);
        Ok((ok, format!("{} values exactly zero", l.len() + la.len())))
    })
}

pub fn check_telescoping() -> Check {
    timed("physics.conservative_telescoping", || {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 12;
        let velocity = [1.0, -0.5, 0.75];
        let b = periodic_block(ModelKind::Advection { velocity }, n, |_| vec![rng.random_range(-1.0..1.0)])?;
        let dx = 1.0 / n as f64;
        let l = rhs(&b, [dx; 3], velocity.map(f64::abs)).map_err(|e| e.to_string())?;
        let vol = dx * dx * dx;
        let total: f64 = l.iter().sum::<f64>() * vol;
        let scale: f64 = b.owned_values().iter().map(|q| q.abs()).sum::<f64>()
            * velocity.iter().map(|v| v.abs() / dx).sum::<f64>()
            * vol;
        let ok = total.abs() <= 1e-12 * scale;
        Ok((ok, format!("sum L dV = {total:.2e} against scale {scale:.2e}")))
    })
}

pub fn check_rk3() -> Check {
    timed("physics.rk3", || {
        let zero = |_: &[f64], l: &mut [f64]| -> Result<(), PhysicsError> {
            l.fill(0.0);
            Ok(())
        };
        let u = [0.1, -3.0, 1e-300, 7.25];
        let mut ok = rk3_step(&u, 0.3, zero).map_err(|e| e.to_string())? == u;
        let decay = |x: &[f64], l: &mut [f64]| -> Result<(), PhysicsError> {
            for (li, xi) in l.iter_mut().zip(x) {
                *li = -xi;
            }
            Ok(())
        };
        let one = rk3_step(&[1.0], 0.1, decay).map_err(|e| e.to_string())?[0];
        ok &= (one - 0.9048333333333333).abs() < 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let dt: f64 = rng.random_range(0.0..0.5);
            if dt == 0.0 {
                continue;
            }
            let got = rk3_step(&[1.0], dt, decay).map_err(|e| e.to_string())?[0];
            ok &= (got - (1.0 - dt + dt * dt / 2.0 - dt * dt * dt / 6.0)).abs() < 1e-14;
        }
        ok &= rk3_step(&[1.0], 0.0, decay).is_err();
        Ok((ok, format!("u'=-u, dt=0.1: {one:.7}")))
    })
}

pub fn check_cfl() -> Check {
    timed("physics.cfl_dt", || {
        let adv = FieldBlock::new(ModelKind::Advection { velocity: [1.0, 0.0, 0.0] }, [10; 3], 3);
        let a = cfl_dt(std::slice::from_ref(&adv), [0.1; 3], 0.4).map_err(|e| e.to_string())?;
        let rest = prim_to_cons(
            &Primitive {
                rho: 1.0,
                v: [0.0; 3],
                p: 1.0,
                b: [0.0; 3],
            },
            GAMMA,
        )
        .map_err(|e| e.to_string())?
        .to_vec();
        let m = periodic_block(mhd(), 10, |_| rest.clone())?;
        let b = cfl_dt(std::slice::from_ref(&m), [0.1; 3], 0.4).map_err(|e| e.to_string())?;
        let b2 = cfl_dt(&[m], [0.2; 3], 0.4).map_err(|e| e.to_string())?;
        let still = FieldBlock::new(ModelKind::Advection { velocity: [0.0; 3] }, [4; 3], 3);
        let expected = 0.4 / (3.0 * GAMMA.sqrt() / 0.1);
        let ok = (a - 0.04).abs() < 1e-15
            && (b - expected).abs() < 1e-15
            && (b2 - 2.0 * b).abs() < 1e-15
            && cfl_dt(&[still], [0.1; 3], 0.4) == Err(PhysicsError::StaticField);
        Ok((ok, format!("advection {a}, MHD rest {b:.6}")))
    })
}

fn magnetized(b: [f64; 3]) -> Vec<f64> {
    let w = Primitive {
        rho: 1.0,
        v: [0.0; 3],
        p: 1.0,
        b,
    };
    prim_to_cons(&w, GAMMA).expect("positive state").to_vec()
}

pub fn check_divb() -> Check {
    timed("physics.divb_diagnostic", || {
        let k = 2.0 * PI;
        let uniform = periodic_block(mhd(), 8, |_| magnetized([0.3, -1.0, 2.0]))?;
        let mut ok = divb_diagnostic(&uniform, [0.125; 3]).map_err(|e| e.to_string())? == 0.0;
        let transverse = periodic_block(mhd(), 16, |x| magnetized([0.0, (k * x[0]).sin(), 0.0]))?;
        ok &= divb_diagnostic(&transverse, [1.0 / 16.0; 3]).map_err(|e| e.to_string())? <= 1e-12;
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let b = periodic_block(mhd(), n, |x| magnetized([(k * x[0]).sin(), 0.0, 0.0]))?;
            let d = divb_diagnostic(&b, [1.0 / n as f64; 3]).map_err(|e| e.to_string())?;
            errs.push((d - k).abs());
        }
        let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
        ok &= orders.iter().all(|&o| o > 1.8);
        let adv = FieldBlock::new(ModelKind::Advection { velocity: [1.0; 3] }, [4; 3], 3);
        ok &= divb_diagnostic(&adv, [0.25; 3]) == Err(PhysicsError::NotMhd);
        Ok((ok, format!("sin(2 pi x) field orders {orders:.2?}")))
    })
}

pub fn check_positivity_guard() -> Check {
    timed("physics.positivity_guard", || {
        let mut u = magnetized([0.0; 3]);
        u[4] = -0.1;
        let direct = matches!(cons_to_prim(&u, GAMMA), Err(PhysicsError::Unphysical { .. }));
        let b = periodic_block(mhd(), 8, |x| {
            let mut u = magnetized([0.0; 3]);
            if x[0] < 0.1 {
                u[0] = -1.0;
            }
            u
        })?;
        let spacing = [0.125; 3];
        let guarded = cfl_dt(&[b], spacing, 0.4).is_err();
        Ok((direct && guarded, "negative pressure and density are rejected".into()))
    })
}

// ---- exec ------------------------------------------------------------

pub fn check_chunks() -> Check {
    timed("exec.chunk_cover", || {
        let mut ok = guided_chunks(16, 4, 1) == [4, 3, 3, 2, 1, 1, 1, 1] && guided_chunks(5, 1, 1) == [5];
        let lens: Vec<usize> = static_chunks(10, 3).iter().map(|r| r.len()).collect();
        ok &= lens == [4, 3, 3] && static_chunks(0, 4).iter().all(|r| r.is_empty());
        let mut cases = 0;
        for n in [0, 1, 2, 7, 31, 100, 1000, 4097, 10_000] {
            for t in 1..=32 {
                let s = static_chunks(n, t);
                ok &= s.len() == t && s.first().is_none_or(|r| r.start == 0);
                ok &= s.windows(2).all(|w| w[0].end == w[1].start) && s.last().map_or(n == 0, |r| r.end == n);
                for min in 1..=8 {
                    let g = guided_chunks(n, t, min);
                    ok &= g.iter().sum::<usize>() == n && g.iter().all(|&c| c > 0);
                    let mut left = n;
                    for &c in &g {
                        ok &= c == left.div_ceil(t).max(min).min(left);
                        left -= c;
                    }
                    cases += 1;
                }
            }
        }
        Ok((ok, format!("{cases} guided cases, 288 static cases")))
    })
}

/// Pairwise tree with odd elements carried up, written independently.
fn tree_sum(v: &[f64]) -> f64 {
    if v.len() == 1 {
        return v[0];
    }
    let next: Vec<f64> = v.chunks(2).map(|c| c.iter().sum()).collect();
    tree_sum(&next)
}

pub fn check_reduce() -> Check {
    timed("exec.ordered_reduce", || {
        let mut ok = ordered_reduce(&[3.0, 1.0, 2.0], ReduceOp::Min) == Ok(1.0);
        ok &= ordered_reduce(&[4.5], ReduceOp::Sum) == Ok(4.5);
        ok &= ordered_reduce(&[], ReduceOp::Sum) == Err(ExecError::EmptyReduction);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for len in 1..40 {
            let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-8..8))).collect();
            ok &= ordered_reduce(&v, ReduceOp::Sum).map(f64::to_bits) == Ok(tree_sum(&v).to_bits());
        }
        Ok((ok, "tree order matches an independent oracle".into()))
    })
}

pub fn check_halo_oracle() -> Check {
    timed("exec.halo_vs_global_oracle", || {
        let n = 32;
        let grid = cube(n);
        let w = grid.halo;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let global: Vec<f64> = (0..n * n * n).map(|_| rng.random()).collect();
        let at = |i: isize, j: isize, k: isize| {
            let m = |c: isize| c.rem_euclid(n as isize) as usize;
            global[(m(k) * n + m(j)) * n + m(i)]
        };
        let model = ModelKind::Advection { velocity: [1.0; 3] };
        for ranks in [1, 2, 4, 8] {
            let layout = RankLayout::for_grid(ranks, &grid).map_err(|e| e.to_string())?;
            let subs: Vec<_> = (0..ranks).map(|r| layout.subdomain(&grid, r).unwrap()).collect();
            let mut blocks: Vec<FieldBlock> = subs
                .iter()
                .map(|s| {
                    let mut b = FieldBlock::new(model, s.count, w);
                    for k in 0..s.count[2] {
                        for j in 0..s.count[1] {
                            for i in 0..s.count[0] {
                                let g = [i + s.offset[0], j + s.offset[1], k + s.offset[2]].map(|c| c as isize);
                                b.set_owned(0, i, j, k, at(g[0], g[1], g[2]));
                            }
                        }
                    }
                    b
                })
                .collect();
            halo_exchange(&layout, &mut blocks, 0).map_err(|e| e.to_string())?;
            for (b, s) in blocks.iter().zip(&subs) {
                let f = b.full();
                for k in 0..f[2] {
                    for j in 0..f[1] {
                        for i in 0..f[0] {
                            let g = [i, j, k].map(|c| c as isize - w as isize);
                            let expect = at(
                                g[0] + s.offset[0] as isize,
                                g[1] + s.offset[1] as isize,
                                g[2] + s.offset[2] as isize,
                            );
                            if b.data[b.idx(0, i, j, k)].to_bits() != expect.to_bits() {
                                return Ok((false, format!("{ranks} ranks: ghost ({i},{j},{k}) differs")));
                            }
                        }
                    }
                }
            }
        }
        Ok((true, "faces, edges and corners match the wrapped global field for 1, 2, 4, 8 ranks".into()))
    })
}

pub fn advection_problem(n: usize, initial: InitialCondition, cfl: f64) -> Result<Problem, ExecError> {
    Problem::new(ModelKind::Advection { velocity: [1.0; 3] }, GlobalGrid::cube(n)?, initial, cfl)
}

pub fn mhd_problem(n: usize, cfl: f64) -> Result<Problem, ExecError> {
    Problem::new(mhd(), GlobalGrid::cube(n)?, InitialCondition::Smooth, cfl)
}

pub fn check_zero_steps(n: usize) -> Check {
    timed("exec.zero_steps", || {
        let p = mhd_problem(n, 0.4).map_err(|e| e.to_string())?;
        let out = run(p.clone(), ExecConfig::new(2, 2), 0).map_err(|e| e.to_string())?;
        let mut ok = out.metrics.records.is_empty() && out.time == 0.0;
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let u = p.initial_state([i, j, k]).map_err(|e| e.to_string())?;
                    ok &= u.iter().enumerate().all(|(v, x)| out.field.get(v, i, j, k) == *x);
                }
            }
        }
        Ok((ok, "initial condition returned unchanged, no timings".into()))
    })
}

/// The rank x thread x schedule x mode x backend matrix.
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub n: usize,
    pub steps: u64,
    pub ranks: Vec<usize>,
    pub threads: Vec<usize>,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            n: 32,
            steps: 20,
            ranks: vec![1, 2, 4, 8],
            threads: vec![1, 2, 4],
        }
    }
}

impl MatrixSpec {
    pub fn configs(&self) -> Vec<ExecConfig> {
        let mut out = Vec::new();
        for &ranks in &self.ranks {
            for &threads in &self.threads {
                for schedule in [Schedule::Static, Schedule::Guided { min_chunk: 1 }] {
                    for mode in [Mode::Optimized, Mode::Baseline] {
                        for backend in [RankBackend::Sequential, RankBackend::Concurrent] {
                            out.push(ExecConfig {
                                ranks,
                                threads_per_rank: threads,
                                schedule,
                                mode,
                                backend,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Configurations whose final field differs bitwise from the (1, 1) run.
pub fn determinism_mismatches(spec: &MatrixSpec) -> Result<(usize, Vec<ExecConfig>), ExecError> {
    let problem = advection_problem(spec.n, InitialCondition::Sine, 0.4)?;
    let reference = run(problem.clone(), ExecConfig::new(1, 1), spec.steps)?.field.to_le_bytes();
    let configs = spec.configs();
    let mut bad = Vec::new();
    for c in &configs {
        if run(problem.clone(), *c, spec.steps)?.field.to_le_bytes() != reference {
            bad.push(*c);
        }
    }
    Ok((configs.len(), bad))
}

pub fn check_determinism(spec: &MatrixSpec) -> Check {
    timed("exec.determinism_matrix", || {
        let (total, bad) = determinism_mismatches(spec).map_err(|e| e.to_string())?;
        let detail = match bad.first() {
            None => format!("{total} configurations bitwise equal to (1,1), {}^3, {} steps", spec.n, spec.steps),
            Some(c) => format!("{} of {total} differ, first {c:?}", bad.len()),
        };
        Ok((bad.is_empty(), detail))
    })
}

/// Rank counts whose multi-rank field differs from the single-rank run,
/// for the advection and MHD kernels.
pub fn oracle_mismatches(n: usize, ranks: &[usize]) -> Result<Vec<(&'static str, usize)>, ExecError> {
    let cases = [
        ("advection", advection_problem(n, InitialCondition::Sine, 0.4)?, 10),
        ("mhd", mhd_problem(n, 0.4)?, 5),
    ];
    let mut bad = Vec::new();
    for (name, problem, steps) in cases {
        let oracle = run(problem.clone(), ExecConfig::new(1, 1), steps)?.field;
        for &r in ranks {
            let got = run(problem.clone(), ExecConfig::new(r, 1), steps)?.field;
            if got.to_le_bytes() != oracle.to_le_bytes() {
                bad.push((name, r));
            }
        }
    }
    Ok(bad)
}

pub fn check_oracle_equivalence(n: usize, ranks: &[usize]) -> Check {
    timed("exec.oracle_equivalence", || {
        let bad = oracle_mismatches(n, ranks).map_err(|e| e.to_string())?;
        Ok((bad.is_empty(), format!("ranks {ranks:?} on {n}^3, both kernels; mismatches {bad:?}")))
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceSpec {
    pub n_coarse: usize,
    pub steps_coarse: u64,
    pub cfl: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            n_coarse: 32,
            steps_coarse: 16,
            cfl: 0.2,
        }
    }
}

fn l1_error(field: &GlobalField, problem: &Problem, t: f64) -> f64 {
    let [nx, ny, nz] = field.n;
    let mut sum = 0.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let x = [i, j, k].map(|c| (c as f64 + 0.5) / nx as f64);
                let exact = problem.initial.advected(&problem.model, x, t).expect("advection model");
                sum += (field.get(0, i, j, k) - exact).abs();
            }
        }
    }
    sum / (nx * ny * nz) as f64
}

/// L1 errors on the coarse and the doubled grid at equal final time, and
/// the observed order.
pub fn convergence(spec: &ConvergenceSpec) -> Result<(f64, f64, f64), ExecError> {
    let mut errs = [0.0; 2];
    let mut times = [0.0; 2];
    for (idx, (n, steps)) in [(spec.n_coarse, spec.steps_coarse), (2 * spec.n_coarse, 2 * spec.steps_coarse)]
        .into_iter()
        .enumerate()
    {
        let problem = advection_problem(n, InitialCondition::Sine, spec.cfl)?;
        let out = run(problem.clone(), ExecConfig::new(1, 1), steps)?;
        times[idx] = out.time;
        errs[idx] = l1_error(&out.field, &problem, out.time);
    }
    debug_assert!((times[0] - times[1]).abs() < 1e-12);
    Ok((errs[0], errs[1], (errs[0] / errs[1]).log2()))
}

pub fn check_convergence(spec: &ConvergenceSpec, min_order: f64) -> Check {
    timed("exec.advection_convergence", || {
        let (e1, e2, order) = convergence(spec).map_err(|e| e.to_string())?;
        Ok((
            order >= min_order,
            format!(
                "L1 {e1:.3e} -> {e2:.3e}, order {order:.2} (need >= {min_order}), {}^3 vs {}^3",
                spec.n_coarse,
                2 * spec.n_coarse
            ),
        ))
    })
}

#[derive(Debug, Clone)]
pub struct ConservationSpec {
    pub n: usize,
    pub steps: u64,
    pub cfl: f64,
    pub ranks: usize,
}

impl Default for ConservationSpec {
    fn default() -> Self {
        Self {
            n: 32,
            steps: 100,
            cfl: 0.4,
            ranks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationResult {
    /// Per variable `|S(end) - S(0)| / sum |U(0)|`.
    pub drift: Vec<f64>,
    pub divb_initial: f64,
    pub divb_max: f64,
}

pub fn conservation(spec: &ConservationSpec) -> Result<ConservationResult, ExecError> {
    let mut sim = Simulation::new(mhd_problem(spec.n, spec.cfl)?, ExecConfig::new(spec.ranks, 1))?;
    let first = sim.totals()?;
    let field = sim.assemble();
    let per_var = field.data.len() / first.len();
    let scale: Vec<f64> = field
        .data
        .chunks_exact(per_var)
        .map(|c| c.iter().map(|x| x.abs()).sum())
        .collect();
    let divb_initial = sim.divb()?;
    let mut divb_max = divb_initial;
    for _ in 0..spec.steps {
        sim.step()?;
        divb_max = divb_max.max(sim.divb()?);
    }
    let last = sim.totals()?;
    let drift = first
        .iter()
        .zip(&last)
        .zip(&scale)
        .map(|((a, b), s)| (b - a).abs() / s)
        .collect();
    Ok(ConservationResult {
        drift,
        divb_initial,
        divb_max,
    })
}

pub fn check_conservation(spec: &ConservationSpec, max_drift: f64, divb_factor: f64) -> Check {
    timed("exec.mhd_conservation", || {
        let r = conservation(spec).map_err(|e| e.to_string())?;
        let worst = r.drift.iter().copied().fold(0.0, f64::max);
        let ok = worst <= max_drift && r.divb_max <= divb_factor * r.divb_initial;
        Ok((
            ok,
            format!(
                "max drift {worst:.2e} (<= {max_drift:.0e}), div B {:.3e} -> max {:.3e} (<= {divb_factor} x step 0)",
                r.divb_initial, r.divb_max
            ),
        ))
    })
}

/// Timings of the same advection run in both modes on one rank.
pub fn mode_comparison(n: usize, steps: u64, threads: usize) -> Result<(MetricsReport, MetricsReport), ExecError> {
    let problem = advection_problem(n, InitialCondition::Sine, 0.4)?;
    let mut reports = Vec::new();
    for mode in [Mode::Baseline, Mode::Optimized] {
        let config = ExecConfig {
            mode,
            ..ExecConfig::new(1, threads)
        };
        reports.push(run(problem.clone(), config, steps)?.metrics);
    }
    let optimized = reports.pop().expect("two runs");
    let baseline = reports.pop().expect("two runs");
    Ok((baseline, optimized))
}

/// Spin fraction of the right-hand-side region.
pub fn rhs_spin(m: &MetricsReport) -> f64 {
    m.record(REGION_RHS).map_or(0.0, |r| r.spin_fraction())
}

// ---- perf and model --------------------------------------------------

pub fn check_amdahl() -> Check {
    timed("perf.amdahl", || {
        let s = amdahl(0.15, 28);
        let ok = (s - 5.544).abs() <= 0.01 && amdahl(0.0, 28) == 28.0 && amdahl(1.0, 28) == 1.0;
        Ok((ok, format!("amdahl(0.15, 28) = {s:.4}")))
    })
}

pub fn check_serial_fraction() -> Check {
    timed("perf.serial_fraction", || {
        let f = serial_fraction(5.544, 28).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for n in [2, 3, 8, 16, 28, 64, 1024] {
            for i in 0..=100 {
                let f0 = i as f64 / 100.0;
                let back = serial_fraction(amdahl(f0, n), n).map_err(|e| e.to_string())?;
                worst = worst.max((back - f0).abs());
            }
        }
        let ok = (f - 0.15).abs() <= 0.005 && worst <= 1e-12 && serial_fraction(30.0, 28).is_err();
        Ok((ok, format!("serial_fraction(5.544, 28) = {f:.4}, round-trip error {worst:.1e}")))
    })
}

/// Improvement percentages of a timing CSV, in row order.
pub fn improvements(csv_text: &str) -> Result<Vec<f64>, crate::error::CliError> {
    Ok(speedup_table(&parse_timings(csv_text)?)?
        .iter()
        .map(|r| r.improvement_pct)
        .collect())
}

pub fn check_compiler_improvements(csv_text: &str, expected: &[f64], tol: f64) -> Check {
    timed("perf.compiler_improvements", || {
        let got = improvements(csv_text).map_err(|e| e.to_string())?;
        let ok = got.len() == expected.len() && got.iter().zip(expected).all(|(g, e)| (g - e).abs() <= tol);
        let plain = speedup(1.27, 1.13).map_err(|e| e.to_string())?;
        Ok((
            ok && plain.ratio == 1.27 / 1.13,
            format!("improvements {got:.2?}% vs {expected:?} +/- {tol}"),
        ))
    })
}

pub fn check_sweet_spots(consts: &ScalingConstants) -> Check {
    timed("model.sweet_spots", || {
        let t = CalibrationTarget::default();
        let cmp = compare_scaling(t.pure_rpn, t.hybrid_rpn, consts, t.n, &t.nodes).map_err(|e| e.to_string())?;
        let ok = cmp.pure_sweet_spot == t.pure_sweet_spot && cmp.hybrid_sweet_spot == t.hybrid_sweet_spot;
        Ok((
            ok,
            format!(
                "{} ranks/node -> {} nodes, {} ranks/node -> {} nodes",
                t.pure_rpn, cmp.pure_sweet_spot, t.hybrid_rpn, cmp.hybrid_sweet_spot
            ),
        ))
    })
}

pub fn check_comm_ratio(consts: &ScalingConstants, min_ratio: f64) -> Check {
    timed("model.comm_ratio", || {
        let t = CalibrationTarget::default();
        let cmp = compare_scaling(t.pure_rpn, t.hybrid_rpn, consts, t.n, &t.nodes).map_err(|e| e.to_string())?;
        let ratio = cmp.comm_ratio.unwrap_or(0.0);
        Ok((ratio >= min_ratio, format!("pure/hybrid comm at the sweet spots = {ratio:.3} (need >= {min_ratio})")))
    })
}

/// Sweet spot never moves to fewer nodes when ranks per node drop, over
/// random latency and bandwidth constants.
pub fn check_sweet_spot_monotone() -> Check {
    timed("model.sweet_spot_monotone", || {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let nodes: Vec<usize> = (0..10).map(|e| 1 << e).collect();
        let rpns = [28, 14, 7, 4, 2, 1];
        let mut cases = 0;
        for _ in 0..300 {
            let consts = ScalingConstants {
                latency: 10f64.powf(rng.random_range(-7.0..-3.0)),
                beta: 10f64.powf(rng.random_range(-12.0..-8.0)),
                sync_rounds: rng.random_range(0.0..2000.0),
                ..ScalingConstants::default()
            };
            let mut last = 0;
            for rpn in rpns {
                let curve = haloforge::scaling_curve(&nodes, rpn, &consts, 1024).map_err(|e| e.to_string())?;
                let spot = sweet_spot(&curve).map_err(|e| e.to_string())?.nodes;
                if spot < last {
                    return Ok((false, format!("{consts:?}: rpn {rpn} sweet spot {spot} < {last}")));
                }
                last = spot;
            }
            cases += 1;
        }
        Ok((true, format!("{cases} random (latency, beta, rounds) draws")))
    })
}
