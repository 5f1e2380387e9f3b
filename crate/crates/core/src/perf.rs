//! Built-in instrumentation: region timers with per-worker busy time,
//! imbalance (spin) accounting, inverse-Amdahl serial fractions and A/B
//! speedups.
//!
//! Busy time is time spent inside a worker's chunk bodies. Whatever else
//! happens inside a region's wall time (waiting at the join, waiting for a
//! serialized resource, idling while the master runs serial code) counts
//! as spin.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

/// Region names recorded by the executor on every step.
pub const REGION_HALO: &str = "halo_exchange";
pub const REGION_RHS: &str = "reconstruct_flux";
pub const REGION_UPDATE: &str = "update";
pub const REGION_REDUCE: &str = "reduce";
pub const STEP_REGIONS: [&str; 4] = [REGION_HALO, REGION_RHS, REGION_UPDATE, REGION_REDUCE];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("region {0:?} stopped without being started")]
    StopWithoutStart(String),
    #[error("region {stopped:?} stopped while {open:?} is the innermost open region")]
    Unbalanced { stopped: String, open: String },
    #[error("busy time {busy} exceeds wall time {wall}")]
    BusyExceedsWall { busy: f64, wall: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("speedup {speedup} is outside the Amdahl model for {workers} workers")]
    OutOfModel { speedup: f64, workers: usize },
    #[error("timings must be positive, got {0} and {1}")]
    NonPositiveTiming(f64, f64),
}

/// Accumulated timings of one named region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRecord {
    pub name: String,
    pub wall: f64,
    pub busy: Vec<f64>,
    pub count: u64,
}

impl RegionRecord {
    fn add(&mut self, wall: f64, busy: &[f64]) {
        self.wall += wall;
        if self.busy.len() < busy.len() {
            self.busy.resize(busy.len(), 0.0);
        }
        for (acc, b) in self.busy.iter_mut().zip(busy) {
            *acc += b;
        }
        self.count += 1;
    }

    pub fn spin_fraction(&self) -> f64 {
        imbalance(&self.busy, self.wall).unwrap_or(0.0)
    }
}

/// Wall time and per-worker busy time of one parallel region invocation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionSample {
    pub wall: f64,
    pub busy: Vec<f64>,
}

impl RegionSample {
    /// A region executed by the master alone while `workers - 1` others idle.
    pub fn serial(wall: f64, workers: usize) -> Self {
        let mut busy = vec![0.0; workers.max(1)];
        busy[0] = wall;
        Self { wall, busy }
    }
}

#[derive(Debug)]
struct OpenRegion {
    name: String,
    resumed: Instant,
    elapsed: f64,
}

/// Per-worker (per-rank) accumulator of region records.
///
/// Scoped regions nest; time is attributed to the innermost open region
/// only, so an outer region's record excludes the time of its children.
#[derive(Debug, Default)]
pub struct Profiler {
    records: Vec<RegionRecord>,
    open: Vec<OpenRegion>,
}

impl Profiler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a scoped region on the calling worker.
    pub fn start(&mut self, name: &str) {
        let now = Instant::now();
        if let Some(top) = self.open.last_mut() {
            top.elapsed += now.duration_since(top.resumed).as_secs_f64();
        }
        self.open.push(OpenRegion {
            name: name.to_owned(),
            resumed: now,
            elapsed: 0.0,
        });
    }

    /// Closes the innermost scoped region, which must be `name`.
    pub fn stop(&mut self, name: &str) -> Result<f64, PerfError> {
        let Some(top) = self.open.last() else {
            return Err(PerfError::StopWithoutStart(name.to_owned()));
        };
        if top.name != name {
            return Err(if self.open.iter().any(|r| r.name == name) {
                PerfError::Unbalanced {
                    stopped: name.to_owned(),
                    open: top.name.clone(),
                }
            } else {
                PerfError::StopWithoutStart(name.to_owned())
            });
        }
        let top = self.open.pop().expect("checked above");
        let now = Instant::now();
        let elapsed = top.elapsed + now.duration_since(top.resumed).as_secs_f64();
        self.record_mut(name).add(elapsed, &[elapsed]);
        if let Some(parent) = self.open.last_mut() {
            parent.resumed = now;
        }
        Ok(elapsed)
    }

    /// Adds a completed parallel region. Its wall time is removed from the
    /// enclosing scoped region, if any.
    pub fn record(&mut self, name: &str, sample: &RegionSample) {
        if let Some(parent) = self.open.last_mut() {
            parent.elapsed -= sample.wall;
        }
        self.record_mut(name).add(sample.wall, &sample.busy);
    }

    pub fn records(&self) -> &[RegionRecord] {
        &self.records
    }

    pub fn get(&self, name: &str) -> Option<&RegionRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    fn record_mut(&mut self, name: &str) -> &mut RegionRecord {
        match self.records.iter().position(|r| r.name == name) {
            Some(i) => &mut self.records[i],
            None => {
                self.records.push(RegionRecord {
                    name: name.to_owned(),
                    wall: 0.0,
                    busy: Vec::new(),
                    count: 0,
                });
                self.records.last_mut().expect("just pushed")
            }
        }
    }
}

/// Fraction of worker time spent waiting: `sum_t (wall - busy_t) / (T * wall)`.
pub fn imbalance(busy: &[f64], wall: f64) -> Result<f64, PerfError> {
    if wall < 0.0 {
        return Err(PerfError::NegativeTime(wall));
    }
    for &b in busy {
        if b < 0.0 {
            return Err(PerfError::NegativeTime(b));
        }
        if b > wall {
            return Err(PerfError::BusyExceedsWall { busy: b, wall });
        }
    }
    if busy.is_empty() || wall == 0.0 {
        return Ok(0.0);
    }
    let idle: f64 = busy.iter().map(|b| wall - b).sum();
    Ok((idle / (busy.len() as f64 * wall)).clamp(0.0, 1.0))
}

/// Inverse Amdahl: the serial fraction implied by speedup `s` on `n` workers.
pub fn serial_fraction(speedup: f64, workers: usize) -> Result<f64, PerfError> {
    let n = workers as f64;
    // rounding in S = 1/(f + (1-f)/N) can land a hair outside [1, N]
    let slack = 1e-12;
    if workers < 2 || !(speedup >= 1.0 - slack) || speedup > n * (1.0 + slack) {
        return Err(PerfError::OutOfModel { speedup, workers });
    }
    let f = (1.0 / speedup - 1.0 / n) / (1.0 - 1.0 / n);
    Ok(f.clamp(0.0, 1.0))
}

/// A/B comparison of two seconds-per-iteration timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Speedup {
    pub ratio: f64,
    /// `(ratio - 1) * 100`.
    pub improvement_pct: f64,
}

pub fn speedup(t_base: f64, t_new: f64) -> Result<Speedup, PerfError> {
    if !(t_base > 0.0) || !(t_new > 0.0) {
        return Err(PerfError::NonPositiveTiming(t_base, t_new));
    }
    let ratio = t_base / t_new;
    Ok(Speedup {
        ratio,
        improvement_pct: (ratio - 1.0) * 100.0,
    })
}

/// Aggregated timings of a run, merged over ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct MetricsReport {
    pub records: Vec<RegionRecord>,
    pub compute: f64,
    pub communication: f64,
    pub reduction: f64,
    /// Spin fraction of the right-hand-side region.
    pub spin_fraction: f64,
    pub comm_fraction: f64,
    pub serial_fraction_estimate: Option<f64>,
    pub steps: u64,
    pub sec_per_iter: f64,
}

impl MetricsReport {
    /// Merges per-rank profilers. A merged region's wall time is the
    /// slowest rank's; busy vectors are concatenated in rank order.
    pub fn from_profilers<'a>(
        profilers: impl IntoIterator<Item = &'a Profiler>,
        steps: u64,
        sec_per_iter: f64,
    ) -> Self {
        let mut records: Vec<RegionRecord> = Vec::new();
        for p in profilers {
            for r in p.records() {
                match records.iter_mut().find(|m| m.name == r.name) {
                    Some(m) => {
                        m.wall = m.wall.max(r.wall);
                        m.busy.extend_from_slice(&r.busy);
                        m.count = m.count.max(r.count);
                    }
                    None => records.push(r.clone()),
                }
            }
        }
        let wall = |name: &str| records.iter().find(|r| r.name == name).map_or(0.0, |r| r.wall);
        let compute = wall(REGION_RHS) + wall(REGION_UPDATE);
        let communication = wall(REGION_HALO);
        let reduction = wall(REGION_REDUCE);
        let total = compute + communication + reduction;
        let spin_fraction = records
            .iter()
            .find(|r| r.name == REGION_RHS)
            .map_or(0.0, RegionRecord::spin_fraction);
        Self {
            records,
            compute,
            communication,
            reduction,
            spin_fraction,
            comm_fraction: if total > 0.0 { communication / total } else { 0.0 },
            serial_fraction_estimate: None,
            steps,
            sec_per_iter,
        }
    }

    pub fn record(&self, name: &str) -> Option<&RegionRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Flat `key = value` form, one entry per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "sec_per_iter = {}", self.sec_per_iter);
        let _ = writeln!(s, "total.compute = {}", self.compute);
        let _ = writeln!(s, "total.communication = {}", self.communication);
        let _ = writeln!(s, "total.reduction = {}", self.reduction);
        let _ = writeln!(s, "derived.spin_fraction = {}", self.spin_fraction);
        let _ = writeln!(s, "derived.comm_fraction = {}", self.comm_fraction);
        match self.serial_fraction_estimate {
            Some(f) => {
                let _ = writeln!(s, "derived.serial_fraction_estimate = {f}");
            }
            None => {
                let _ = writeln!(s, "derived.serial_fraction_estimate = none");
            }
        }
        for r in &self.records {
            let _ = writeln!(s, "region.{}.count = {}", r.name, r.count);
            let _ = writeln!(s, "region.{}.wall = {}", r.name, r.wall);
            let _ = writeln!(s, "region.{}.workers = {}", r.name, r.busy.len());
            let _ = writeln!(s, "region.{}.busy_total = {}", r.name, r.busy.iter().sum::<f64>());
            let _ = writeln!(s, "region.{}.spin_fraction = {}", r.name, r.spin_fraction());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::amdahl;
    use proptest::prelude::*;
    use std::time::Duration;

    fn spin_for(d: Duration) {
        let t = Instant::now();
        while t.elapsed() < d {
            std::hint::spin_loop();
        }
    }

    #[test]
    fn empty_region() {
        let mut p = Profiler::new();
        p.start("empty");
        let wall = p.stop("empty").unwrap();
        let r = p.get("empty").unwrap();
        assert!(wall >= 0.0);
        assert_eq!(r.busy, vec![r.wall]);
        assert_eq!(r.count, 1);
    }

    #[test]
    fn repeated_invocations_accumulate() {
        let mut p = Profiler::new();
        let mut total = 0.0;
        for _ in 0..2 {
            p.start("r");
            spin_for(Duration::from_millis(2));
            total += p.stop("r").unwrap();
        }
        let r = p.get("r").unwrap();
        assert_eq!(r.count, 2);
        assert!((r.wall - total).abs() < 1e-12);
        assert!(r.wall >= 0.004);
    }

    #[test]
    fn nested_region_gets_exclusive_time() {
        let ratio = 0.5;
        let outer_work = Duration::from_millis(40);
        let mut p = Profiler::new();
        p.start("outer");
        spin_for(outer_work / 2);
        p.start("inner");
        spin_for(outer_work.mul_f64(ratio));
        p.stop("inner").unwrap();
        spin_for(outer_work / 2);
        p.stop("outer").unwrap();
        let inner = p.get("inner").unwrap().busy[0];
        let outer = p.get("outer").unwrap().busy[0];
        let measured = inner / outer;
        assert!((measured - ratio).abs() <= 0.2 * ratio, "ratio {measured}");
    }

    #[test]
    fn stop_errors() {
        let mut p = Profiler::new();
        assert_eq!(p.stop("x"), Err(PerfError::StopWithoutStart("x".into())));
        p.start("a");
        p.start("b");
        assert!(matches!(p.stop("a"), Err(PerfError::Unbalanced { .. })));
        p.stop("b").unwrap();
        p.stop("a").unwrap();
    }

    #[test]
    fn parallel_record_inside_scope_is_excluded() {
        let mut p = Profiler::new();
        p.start("outer");
        spin_for(Duration::from_millis(10));
        p.record("par", &RegionSample { wall: 0.008, busy: vec![0.004, 0.008] });
        p.stop("outer").unwrap();
        let outer = p.get("outer").unwrap().wall;
        assert!(outer < 0.01 && outer > 0.0);
        assert_eq!(p.get("par").unwrap().busy, vec![0.004, 0.008]);
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance(&[10.0; 4], 10.0).unwrap(), 0.0);
        assert_eq!(imbalance(&[10.0, 5.0, 5.0, 5.0], 10.0).unwrap(), 0.375);
        assert_eq!(imbalance(&[3.0], 3.0).unwrap(), 0.0);
        assert!(matches!(imbalance(&[11.0], 10.0), Err(PerfError::BusyExceedsWall { .. })));
    }

    #[test]
    fn serial_fraction_examples() {
        let f = serial_fraction(5.544, 28).unwrap();
        assert!((f - 0.150).abs() < 0.005, "{f}");
        assert_eq!(serial_fraction(28.0, 28).unwrap(), 0.0);
        assert_eq!(serial_fraction(1.0, 28).unwrap(), 1.0);
        assert!(serial_fraction(29.0, 28).is_err());
        assert!(serial_fraction(0.5, 28).is_err());
        assert!(serial_fraction(1.5, 1).is_err());
    }

    #[test]
    fn speedup_examples_from_compiler_table() {
        let cases = [(1.27, 1.13, 1.124, 12.4), (0.66, 0.57, 1.158, 15.8), (4.91, 4.22, 1.163, 16.3)];
        for (base, new, ratio, pct) in cases {
            let s = speedup(base, new).unwrap();
            assert!((s.ratio - ratio).abs() < 1e-3, "{s:?}");
            assert!((s.improvement_pct - pct).abs() <= 0.1, "{s:?}");
        }
        assert_eq!(speedup(0.7, 0.7).unwrap().ratio, 1.0);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -1.0).is_err());
    }

    #[test]
    fn report_merges_ranks() {
        let mut a = Profiler::new();
        a.record(REGION_RHS, &RegionSample { wall: 2.0, busy: vec![2.0, 1.0] });
        a.record(REGION_HALO, &RegionSample::serial(1.0, 1));
        let mut b = Profiler::new();
        b.record(REGION_RHS, &RegionSample { wall: 4.0, busy: vec![4.0, 4.0] });
        b.record(REGION_HALO, &RegionSample::serial(0.5, 1));
        let m = MetricsReport::from_profilers(&[a, b], 3, 0.1);
        let rhs = m.record(REGION_RHS).unwrap();
        assert_eq!(rhs.wall, 4.0);
        assert_eq!(rhs.busy, vec![2.0, 1.0, 4.0, 4.0]);
        // merged wall is the slowest rank's: idle (2 + 3 + 0 + 0) / (4 * 4)
        assert_eq!(m.spin_fraction, 5.0 / 16.0);
        assert_eq!(m.communication, 1.0);
        assert_eq!(m.comm_fraction, 0.2);
        let kv = m.to_kv();
        assert!(kv.contains("region.reconstruct_flux.workers = 4"));
        assert!(kv.contains("derived.serial_fraction_estimate = none"));
    }

    proptest! {
        #[test]
        fn serial_fraction_inverts_amdahl(f in 0.0f64..=1.0, n in 2usize..=512) {
            let back = serial_fraction(amdahl(f, n), n).unwrap();
            prop_assert!((back - f).abs() <= 1e-12, "{f} -> {back}");
        }

        #[test]
        fn spin_fraction_scale_invariant(
            busy in proptest::collection::vec(0.0f64..1.0, 1..16),
            k in 1e-3f64..1e3,
        ) {
            let wall = busy.iter().cloned().fold(0.0, f64::max) + 0.1;
            let a = imbalance(&busy, wall).unwrap();
            let scaled: Vec<f64> = busy.iter().map(|b| b * k).collect();
            let b = imbalance(&scaled, wall * k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
