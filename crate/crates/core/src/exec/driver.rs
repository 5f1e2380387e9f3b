//! The simulation driver: per step one halo exchange, a CFL reduction and
//! three RK3 stages, each stage refilling halos, evaluating the operator
//! over z-plane chunks and updating owned cells.

use std::ops::Range;
use std::time::Instant;

use serde::Serialize;

use crate::grid::{RankLayout, Subdomain};
use crate::perf::{MetricsReport, Profiler, RegionSample, REGION_HALO, REGION_REDUCE, REGION_RHS, REGION_UPDATE};
use crate::physics::kernel::{flux_plane_len, local_dt, rhs_plane_len};
use crate::physics::{
    compute_fluxes, divb_diagnostic, rhs_planes, rk3_stage, speed_bound, FieldBlock, KernelScratch, ModelKind,
    PhysicsError, SpeedBound, RK3_STAGES,
};

use super::halo::{connect, Endpoint};
use super::reduce::{ordered_reduce, ReduceOp};
use super::schedule::{split_by_ranges, Mode, ThreadTeam};
use super::{ExecConfig, ExecError, Problem, RankBackend};

/// Message tags per step: one per RK stage plus one for diagnostics.
const TAGS_PER_STEP: u64 = 4;

struct RankState {
    rank: usize,
    sub: Subdomain,
    block: FieldBlock,
    u0: Vec<f64>,
    flux: Vec<f64>,
    l: Vec<f64>,
    scratch: Vec<KernelScratch>,
    cells: Vec<Vec<f64>>,
    profiler: Profiler,
    endpoint: Endpoint,
}

/// Summary of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub time: f64,
    pub dt: f64,
    pub alpha: [f64; 3],
}

/// Owned values of the whole grid in `[var][k][j][i]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalField {
    pub model: ModelKind,
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl GlobalField {
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    pub fn get(&self, v: usize, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, nz] = self.n;
        self.data[((v * nz + k) * ny + j) * nx + i]
    }
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub field: GlobalField,
    pub metrics: MetricsReport,
    pub diagnostics: Vec<StepDiagnostics>,
    pub time: f64,
}

/// A problem distributed over ranks, advanced step by step.
pub struct Simulation {
    problem: Problem,
    config: ExecConfig,
    layout: RankLayout,
    team: ThreadTeam,
    ranks: Vec<RankState>,
    step: u64,
    time: f64,
    wall: f64,
}

impl Simulation {
    pub fn new(problem: Problem, config: ExecConfig) -> Result<Self, ExecError> {
        config.validate()?;
        let layout = RankLayout::for_grid(config.ranks, &problem.grid)?;
        let team = ThreadTeam::new(config.threads_per_rank, config.schedule, config.mode);
        let endpoints = connect(&layout);
        let mut ranks = Vec::with_capacity(layout.ranks());
        for (rank, endpoint) in endpoints.into_iter().enumerate() {
            let sub = layout.subdomain(&problem.grid, rank)?;
            let mut block = FieldBlock::new(problem.model, sub.count, problem.grid.halo);
            let [nx, ny, nz] = sub.count;
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let g = [i + sub.offset[0], j + sub.offset[1], k + sub.offset[2]];
                        let u = problem
                            .initial_state(g)
                            .map_err(|source| ExecError::Global { step: 0, source })?;
                        for (v, x) in u.into_iter().enumerate() {
                            block.set_owned(v, i, j, k, x);
                        }
                    }
                }
            }
            let fz = block.full()[2];
            ranks.push(RankState {
                rank,
                sub,
                u0: vec![0.0; block.data.len()],
                flux: vec![0.0; flux_plane_len(&block) * fz],
                l: vec![0.0; rhs_plane_len(&block) * nz],
                scratch: vec![KernelScratch::for_block(&block); team.threads],
                cells: vec![vec![0.0; block.nvars()]; team.threads],
                profiler: Profiler::new(),
                endpoint,
                block,
            });
        }
        Ok(Self {
            problem,
            config,
            layout,
            team,
            ranks,
            step: 0,
            time: 0.0,
            wall: 0.0,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &ExecConfig {
        &self.config
    }

    pub fn layout(&self) -> &RankLayout {
        &self.layout
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<StepDiagnostics, ExecError> {
        let started = Instant::now();
        let step = self.step;
        let base = step * TAGS_PER_STEP;
        let spacing = self.problem.grid.spacing();
        let cfl = self.problem.cfl;
        let team = self.team;

        self.exchange(base, true)?;

        let mut bounds = vec![SpeedBound::default(); self.ranks.len()];
        {
            let mut slots: Vec<_> = bounds.iter_mut().zip(self.ranks.iter_mut()).collect();
            for_each(&mut slots, self.config.backend, |(slot, r)| {
                **slot = r.scan(&team, spacing).map_err(|source| ExecError::Kernel {
                    step,
                    rank: r.rank,
                    source,
                })?;
                Ok(())
            })?;
        }
        let dts: Vec<f64> = bounds.iter().map(|b| local_dt(b, cfl)).collect();
        let dt = ordered_reduce(&dts, ReduceOp::Min)?;
        if !dt.is_finite() {
            return Err(ExecError::Global {
                step,
                source: PhysicsError::StaticField,
            });
        }
        let mut alpha = [0.0; 3];
        for (a, slot) in alpha.iter_mut().enumerate() {
            let per_rank: Vec<f64> = bounds.iter().map(|b| b.alpha[a]).collect();
            *slot = ordered_reduce(&per_rank, ReduceOp::Max)?;
        }

        for stage in 0..RK3_STAGES {
            if stage > 0 {
                self.exchange(base + stage as u64, true)?;
            }
            for_each(&mut self.ranks, self.config.backend, |r| {
                r.stage(&team, stage, dt, alpha, spacing).map_err(|source| ExecError::Kernel {
                    step,
                    rank: r.rank,
                    source,
                })
            })?;
        }

        for_each(&mut self.ranks, self.config.backend, |r| {
            r.validate(&team).map_err(|source| ExecError::Kernel {
                step,
                rank: r.rank,
                source,
            })
        })?;

        self.step += 1;
        self.time += dt;
        self.wall += started.elapsed().as_secs_f64();
        Ok(StepDiagnostics {
            step: self.step,
            time: self.time,
            dt,
            alpha,
        })
    }

    pub fn advance(&mut self, steps: u64) -> Result<Vec<StepDiagnostics>, ExecError> {
        (0..steps).map(|_| self.step()).collect()
    }

    /// Fills every rank's ghost layers. Sequential ranks post all faces of
    /// an axis before any rank receives; concurrent ranks block on receive.
    fn exchange(&mut self, tag: u64, timed: bool) -> Result<(), ExecError> {
        let threads = self.team.threads;
        match self.config.backend {
            RankBackend::Sequential => {
                let mut spent = vec![0.0; self.ranks.len()];
                for axis in 0..3 {
                    for (r, t) in self.ranks.iter().zip(spent.iter_mut()) {
                        let t0 = Instant::now();
                        r.endpoint.post(&r.block, axis, tag)?;
                        *t += t0.elapsed().as_secs_f64();
                    }
                    for (r, t) in self.ranks.iter_mut().zip(spent.iter_mut()) {
                        let t0 = Instant::now();
                        r.endpoint.complete(&mut r.block, axis, tag, false)?;
                        *t += t0.elapsed().as_secs_f64();
                    }
                }
                if timed {
                    for (r, t) in self.ranks.iter_mut().zip(spent) {
                        r.profiler.record(REGION_HALO, &RegionSample::serial(t, threads));
                    }
                }
                Ok(())
            }
            RankBackend::Concurrent => for_each(&mut self.ranks, RankBackend::Concurrent, |r| {
                let t0 = Instant::now();
                for axis in 0..3 {
                    r.endpoint.post(&r.block, axis, tag)?;
                    r.endpoint.complete(&mut r.block, axis, tag, true)?;
                }
                if timed {
                    let t = t0.elapsed().as_secs_f64();
                    r.profiler.record(REGION_HALO, &RegionSample::serial(t, threads));
                }
                Ok(())
            }),
        }
    }

    /// Owned values of all ranks gathered into global order.
    pub fn assemble(&self) -> GlobalField {
        let n = self.problem.grid.n;
        let nv = self.problem.model.nvars();
        let mut data = vec![0.0; nv * n.iter().product::<usize>()];
        for r in &self.ranks {
            let b = &r.block;
            let [nx, ny, nz] = b.count;
            for v in 0..nv {
                for k in 0..nz {
                    for j in 0..ny {
                        let src = b.idx(v, b.halo, j + b.halo, k + b.halo);
                        let (gj, gk) = (j + r.sub.offset[1], k + r.sub.offset[2]);
                        let dst = ((v * n[2] + gk) * n[1] + gj) * n[0] + r.sub.offset[0];
                        data[dst..dst + nx].copy_from_slice(&b.data[src..src + nx]);
                    }
                }
            }
        }
        GlobalField {
            model: self.problem.model,
            n,
            data,
        }
    }

    /// Per-variable sums over owned cells, combined across ranks along the
    /// fixed reduction tree.
    pub fn totals(&self) -> Result<Vec<f64>, ExecError> {
        let nv = self.problem.model.nvars();
        let per_rank: Vec<Vec<f64>> = self
            .ranks
            .iter()
            .map(|r| {
                let vals = r.block.owned_values();
                let per_var = vals.len() / nv;
                vals.chunks_exact(per_var).map(|c| c.iter().sum()).collect()
            })
            .collect();
        (0..nv)
            .map(|v| {
                let column: Vec<f64> = per_rank.iter().map(|s| s[v]).collect();
                ordered_reduce(&column, ReduceOp::Sum)
            })
            .collect()
    }

    /// Maximum `|div B|` over the whole grid (MHD only).
    pub fn divb(&mut self) -> Result<f64, ExecError> {
        if !matches!(self.problem.model, ModelKind::IdealMhd { .. }) {
            return Err(ExecError::Global {
                step: self.step,
                source: PhysicsError::NotMhd,
            });
        }
        self.exchange(self.step * TAGS_PER_STEP + 3, false)?;
        let spacing = self.problem.grid.spacing();
        let step = self.step;
        let per_rank = self
            .ranks
            .iter()
            .map(|r| {
                divb_diagnostic(&r.block, spacing).map_err(|source| ExecError::Kernel {
                    step,
                    rank: r.rank,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        ordered_reduce(&per_rank, ReduceOp::Max)
    }

    /// Timings merged over ranks.
    pub fn metrics(&self) -> MetricsReport {
        let per_iter = if self.step > 0 { self.wall / self.step as f64 } else { 0.0 };
        MetricsReport::from_profilers(self.ranks.iter().map(|r| &r.profiler), self.step, per_iter)
    }

    pub fn into_output(self, diagnostics: Vec<StepDiagnostics>) -> RunOutput {
        RunOutput {
            field: self.assemble(),
            metrics: self.metrics(),
            diagnostics,
            time: self.time,
        }
    }
}

/// Runs `f` on every element, in order on the calling thread or on one
/// scoped thread each. The error reported is the one of the lowest index.
fn for_each<T, F>(items: &mut [T], backend: RankBackend, f: F) -> Result<(), ExecError>
where
    T: Send,
    F: Fn(&mut T) -> Result<(), ExecError> + Sync,
{
    match backend {
        RankBackend::Sequential => items.iter_mut().try_for_each(f),
        RankBackend::Concurrent => {
            let results: Vec<Result<(), ExecError>> = std::thread::scope(|s| {
                let handles: Vec<_> = items
                    .iter_mut()
                    .map(|item| {
                        let f = &f;
                        s.spawn(move || f(item))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rank panicked")).collect()
            });
            results.into_iter().collect()
        }
    }
}

/// Splits a block's data into per-chunk, per-variable mutable views of
/// whole padded z-planes `w + range`.
fn plane_views<'a>(block_data: &'a mut [f64], var_len: usize, plane: usize, w: usize, ranges: &[Range<usize>]) -> Vec<Vec<&'a mut [f64]>> {
    let mut out: Vec<Vec<&mut [f64]>> = ranges.iter().map(|_| Vec::new()).collect();
    for var in block_data.chunks_exact_mut(var_len) {
        let (_, owned) = var.split_at_mut(w * plane);
        for (slot, piece) in out.iter_mut().zip(split_by_ranges(owned, ranges, plane)) {
            slot.push(piece);
        }
    }
    out
}

impl RankState {
    /// Local speed bound over owned cells.
    fn scan(&mut self, team: &ThreadTeam, spacing: [f64; 3]) -> Result<SpeedBound, PhysicsError> {
        let nz = self.block.count[2];
        let block = &self.block;
        let bound = match team.mode {
            Mode::Optimized => {
                let chunks = team.chunks(nz);
                let mut parts = vec![SpeedBound::default(); chunks.len()];
                let sample = team.parallel_for(
                    chunks.into_iter().zip(parts.iter_mut()).collect(),
                    &mut self.cells,
                    |range, slot, cell| {
                        *slot = speed_bound(block, spacing, range, cell)?;
                        Ok(())
                    },
                )?;
                self.profiler.record(REGION_REDUCE, &sample);
                parts.into_iter().fold(SpeedBound::default(), SpeedBound::max)
            }
            Mode::Baseline => {
                let t0 = Instant::now();
                let bound = speed_bound(block, spacing, 0..nz, &mut self.cells[0])?;
                let sample = RegionSample::serial(t0.elapsed().as_secs_f64(), team.threads);
                self.profiler.record(REGION_REDUCE, &sample);
                bound
            }
        };
        Ok(bound)
    }

    /// One RK3 stage: operator over z-plane chunks, then the update.
    fn stage(
        &mut self,
        team: &ThreadTeam,
        stage: usize,
        dt: f64,
        alpha: [f64; 3],
        spacing: [f64; 3],
    ) -> Result<(), PhysicsError> {
        if stage == 0 {
            self.u0.copy_from_slice(&self.block.data);
        }
        let block = &self.block;
        let fz = block.full()[2];
        let [nx, ny, nz] = block.count;
        let nv = block.nvars();

        let chunks = team.chunks(fz);
        let pieces = split_by_ranges(&mut self.flux, &chunks, flux_plane_len(block));
        let fluxes = team.parallel_for(
            chunks.into_iter().zip(pieces).collect(),
            &mut self.scratch,
            |range, out, scratch| compute_fluxes(block, range, out, scratch),
        )?;

        let flux = &self.flux;
        let chunks = team.chunks(nz);
        let pieces = split_by_ranges(&mut self.l, &chunks, rhs_plane_len(block));
        let ops = team.parallel_for(
            chunks.into_iter().zip(pieces).collect(),
            &mut self.scratch,
            |range, out, scratch| {
                rhs_planes(block, flux, spacing, alpha, range, out, scratch);
                Ok::<_, PhysicsError>(())
            },
        )?;
        self.profiler.record(REGION_RHS, &merge(&fluxes, &ops));

        let w = self.block.halo;
        let [fx, fy, _] = self.block.full();
        let (var_len, plane) = (self.block.var_len(), self.block.plane_len());
        let (u0, l) = (&self.u0, &self.l);
        let update = |range: Range<usize>, views: Vec<&mut [f64]>| {
            for (v, dst) in views.into_iter().enumerate() {
                for k in range.clone() {
                    let kl = k - range.start;
                    for j in 0..ny {
                        let row = (kl * fy + j + w) * fx + w;
                        let src = v * var_len + (k + w) * plane + (j + w) * fx + w;
                        let lrow = (k * nv + v) * nx * ny + j * nx;
                        for i in 0..nx {
                            dst[row + i] = rk3_stage(stage, u0[src + i], dst[row + i], l[lrow + i], dt);
                        }
                    }
                }
            }
        };
        let sample = match team.mode {
            Mode::Optimized => {
                let chunks = team.chunks(nz);
                let views = plane_views(&mut self.block.data, var_len, plane, w, &chunks);
                let mut unit = vec![(); team.threads];
                team.parallel_for(chunks.into_iter().zip(views).collect(), &mut unit, |range, views, _| {
                    update(range, views);
                    Ok::<_, PhysicsError>(())
                })?
            }
            Mode::Baseline => {
                let t0 = Instant::now();
                let whole = 0..nz;
                let views = plane_views(&mut self.block.data, var_len, plane, w, std::slice::from_ref(&whole));
                for v in views {
                    update(whole.clone(), v);
                }
                RegionSample::serial(t0.elapsed().as_secs_f64(), team.threads)
            }
        };
        self.profiler.record(REGION_UPDATE, &sample);
        Ok(())
    }

    /// Positivity and finiteness guard over owned cells.
    fn validate(&mut self, team: &ThreadTeam) -> Result<(), PhysicsError> {
        let t0 = Instant::now();
        let b = &self.block;
        let [nx, ny, nz] = b.count;
        let w = b.halo;
        let cell = &mut self.cells[0];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    b.cell(i + w, j + w, k + w, cell);
                    b.model.validate(cell)?;
                }
            }
        }
        let sample = RegionSample::serial(t0.elapsed().as_secs_f64(), team.threads);
        self.profiler.record(REGION_REDUCE, &sample);
        Ok(())
    }
}

/// Two back-to-back regions of the same team seen as one.
fn merge(a: &RegionSample, b: &RegionSample) -> RegionSample {
    RegionSample {
        wall: a.wall + b.wall,
        busy: a.busy.iter().zip(&b.busy).map(|(x, y)| x + y).collect(),
    }
}

/// Runs `steps` steps of `problem` under `config`.
pub fn run(problem: Problem, config: ExecConfig, steps: u64) -> Result<RunOutput, ExecError> {
    let mut sim = Simulation::new(problem, config)?;
    let diagnostics = sim.advance(steps)?;
    Ok(sim.into_output(diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{InitialCondition, Schedule};
    use crate::grid::GlobalGrid;
    use crate::perf::STEP_REGIONS;

    fn advection(n: usize) -> Problem {
        let grid = GlobalGrid::cube(n).unwrap();
        let model = ModelKind::Advection { velocity: [1.0, 0.5, 0.25] };
        Problem::new(model, grid, InitialCondition::Sine, 0.4).unwrap()
    }

    fn mhd(n: usize) -> Problem {
        let grid = GlobalGrid::cube(n).unwrap();
        let model = ModelKind::IdealMhd { gamma: 5.0 / 3.0 };
        Problem::new(model, grid, InitialCondition::Smooth, 0.4).unwrap()
    }

    fn cfg(ranks: usize, threads: usize, schedule: Schedule, mode: Mode, backend: RankBackend) -> ExecConfig {
        ExecConfig {
            ranks,
            threads_per_rank: threads,
            schedule,
            mode,
            backend,
        }
    }

    #[test]
    fn zero_steps_returns_initial_condition() {
        let p = advection(12);
        let out = run(p.clone(), ExecConfig::default(), 0).unwrap();
        assert!(out.metrics.records.is_empty());
        assert_eq!(out.metrics.steps, 0);
        for k in 0..12 {
            for j in 0..12 {
                for i in 0..12 {
                    assert_eq!(out.field.get(0, i, j, k), p.initial_state([i, j, k]).unwrap()[0]);
                }
            }
        }
    }

    #[test]
    fn every_step_records_all_regions() {
        let out = run(advection(12), ExecConfig::new(2, 2), 3).unwrap();
        for name in STEP_REGIONS {
            let r = out.metrics.record(name).unwrap_or_else(|| panic!("missing {name}"));
            assert!(r.count >= 3, "{name}: {}", r.count);
            assert_eq!(r.busy.len(), 4, "{name}");
        }
        assert!(out.metrics.sec_per_iter > 0.0);
    }

    #[test]
    fn small_matrix_is_bitwise_identical() {
        let reference = run(advection(16), ExecConfig::default(), 4).unwrap().field;
        for (ranks, threads) in [(2, 1), (2, 3), (4, 2)] {
            for schedule in [Schedule::Static, Schedule::Guided { min_chunk: 1 }] {
                for mode in [Mode::Optimized, Mode::Baseline] {
                    for backend in [RankBackend::Sequential, RankBackend::Concurrent] {
                        let c = cfg(ranks, threads, schedule, mode, backend);
                        let got = run(advection(16), c, 4).unwrap().field;
                        assert!(got.data == reference.data, "{c:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn mhd_multi_rank_matches_single_rank() {
        let reference = run(mhd(12), ExecConfig::default(), 2).unwrap().field;
        let c = cfg(2, 2, Schedule::Guided { min_chunk: 2 }, Mode::Optimized, RankBackend::Concurrent);
        let got = run(mhd(12), c, 2).unwrap().field;
        assert!(got.data == reference.data);
    }

    #[test]
    fn sine_advects_to_shifted_profile() {
        let p = advection(24);
        let mut sim = Simulation::new(p.clone(), ExecConfig::default()).unwrap();
        sim.advance(10).unwrap();
        let t = sim.time();
        let f = sim.assemble();
        let mut err = 0.0f64;
        for k in 0..24 {
            for j in 0..24 {
                for i in 0..24 {
                    let x = [i, j, k].map(|c| (c as f64 + 0.5) / 24.0);
                    let exact = p.initial.advected(&p.model, x, t).unwrap();
                    err = err.max((f.get(0, i, j, k) - exact).abs());
                }
            }
        }
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn totals_are_conserved_for_mhd() {
        let mut sim = Simulation::new(mhd(12), ExecConfig::new(2, 1)).unwrap();
        let before = sim.totals().unwrap();
        let scale: f64 = sim.assemble().data.iter().map(|x| x.abs()).sum();
        sim.advance(5).unwrap();
        let after = sim.totals().unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn unphysical_state_reports_step_and_rank() {
        let grid = GlobalGrid::cube(12).unwrap();
        let model = ModelKind::IdealMhd { gamma: 5.0 / 3.0 };
        let p = Problem::new(model, grid, InitialCondition::Uniform, 0.4).unwrap();
        let mut sim = Simulation::new(p, ExecConfig::new(2, 1)).unwrap();
        // corrupt one owned cell of rank 1
        sim.ranks[1].block.set_owned(0, 1, 1, 1, -1.0);
        match sim.step().unwrap_err() {
            ExecError::Kernel { step, rank, .. } => assert_eq!((step, rank), (0, 1)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn static_field_is_an_error() {
        let grid = GlobalGrid::cube(8).unwrap();
        let model = ModelKind::Advection { velocity: [0.0; 3] };
        let p = Problem::new(model, grid, InitialCondition::Sine, 0.4).unwrap();
        let err = run(p, ExecConfig::default(), 1).unwrap_err();
        assert!(matches!(err, ExecError::Global { source: PhysicsError::StaticField, .. }));
    }
}
