//! Analytic performance models: Amdahl's law and a node-aggregated
//! strong-scaling model for hybrid rank x thread configurations.
//!
//! Time per iteration on `N` nodes with `r` ranks per node (`R = N r`
//! ranks, `c` cores per node):
//!
//! ```text
//! compute    = a n^3 / (N c)
//! latency    = lambda m r
//! bandwidth  = beta 6 w V b n^2 r^(1/3) / N^(2/3)
//! collective = lambda q r log2(R)
//! serial     = s
//! ```
//!
//! The first two communication terms alone decrease monotonically in `N`,
//! so the model would never have an interior minimum. The collective term
//! charges every rank on a node one latency per reduction-tree level and
//! per synchronizing round (`q`, fitted); it supplies the minimum and
//! vanishes with `lambda`, so `lambda = beta = 0` is still the pure
//! compute limit.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{ranks_per_node} ranks per node do not divide {cores_per_node} cores per node")]
    NotDivisible { cores_per_node: usize, ranks_per_node: usize },
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("empty scaling curve")]
    EmptyCurve,
    #[error("calibration failed: {0}")]
    Calibration(String),
}

/// Amdahl speedup of a code with serial fraction `f` on `n` workers.
pub fn amdahl(f: f64, n: usize) -> f64 {
    1.0 / (f + (1.0 - f) / n as f64)
}

/// Fitted number of synchronizing rounds per step that places the
/// sweet spots of the default constants at 32 (28 ranks per node) and 128
/// (4 ranks per node) nodes for a 1024^3 grid. Produced by [`calibrate`].
pub const DEFAULT_SYNC_ROUNDS: f64 = 473.0;

/// Constants of the scaling model. All times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingConstants {
    /// Compute seconds per cell per step on one core.
    pub a: f64,
    /// Serial seconds per step.
    pub s: f64,
    /// Per-message latency.
    pub latency: f64,
    /// Seconds per byte of halo traffic injected by one node.
    pub beta: f64,
    /// Synchronizing rounds per step in the collective term.
    pub sync_rounds: f64,
    pub cores_per_node: usize,
    pub bytes_per_value: usize,
    pub vars: usize,
    pub halo: usize,
    /// Point-to-point messages per rank per step.
    pub messages: f64,
}

impl Default for ScalingConstants {
    fn default() -> Self {
        Self {
            a: 2e-7,
            s: 0.0,
            latency: 2e-5,
            beta: 2e-10,
            sync_rounds: DEFAULT_SYNC_ROUNDS,
            cores_per_node: 28,
            bytes_per_value: 8,
            vars: 8,
            halo: 3,
            messages: 18.0,
        }
    }
}

impl ScalingConstants {
    pub fn validate(&self) -> Result<(), ModelError> {
        let reals = [
            ("a", self.a),
            ("s", self.s),
            ("latency", self.latency),
            ("beta", self.beta),
            ("sync_rounds", self.sync_rounds),
            ("messages", self.messages),
        ];
        for (name, x) in reals {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(ModelError::InvalidInput(format!("{name} = {x} must be finite and non-negative")));
            }
        }
        if self.cores_per_node == 0 {
            return Err(ModelError::InvalidInput("cores_per_node must be positive".into()));
        }
        Ok(())
    }

    /// The same machine with every time constant multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            a: self.a * k,
            s: self.s * k,
            latency: self.latency * k,
            beta: self.beta * k,
            ..*self
        }
    }
}

/// Communication time split by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct CommTerms {
    pub latency: f64,
    pub bandwidth: f64,
    pub collective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub nodes: usize,
    pub ranks_per_node: usize,
    pub sec_per_iter: f64,
    pub compute: f64,
    pub comm: f64,
    pub serial: f64,
    pub comm_terms: CommTerms,
}

impl CurvePoint {
    pub fn cores(&self, cores_per_node: usize) -> usize {
        self.nodes * cores_per_node
    }
}

/// Modeled time per iteration of an `n^3` grid.
pub fn scaling_time(
    nodes: usize,
    ranks_per_node: usize,
    consts: &ScalingConstants,
    n: usize,
) -> Result<CurvePoint, ModelError> {
    consts.validate()?;
    if nodes == 0 || ranks_per_node == 0 || n == 0 {
        return Err(ModelError::InvalidInput(format!(
            "nodes ({nodes}), ranks per node ({ranks_per_node}) and n ({n}) must be positive"
        )));
    }
    if consts.cores_per_node % ranks_per_node != 0 {
        return Err(ModelError::NotDivisible {
            cores_per_node: consts.cores_per_node,
            ranks_per_node,
        });
    }
    let (nf, r, n) = (nodes as f64, ranks_per_node as f64, n as f64);
    let ranks = nf * r;
    let compute = consts.a * n.powi(3) / (nf * consts.cores_per_node as f64);
    let face_bytes = 6.0 * (consts.halo * consts.vars * consts.bytes_per_value) as f64 * n * n;
    let comm_terms = CommTerms {
        latency: consts.latency * consts.messages * r,
        bandwidth: consts.beta * face_bytes * r.cbrt() / nf.powf(2.0 / 3.0),
        collective: consts.latency * consts.sync_rounds * r * ranks.log2(),
    };
    let comm = comm_terms.latency + comm_terms.bandwidth + comm_terms.collective;
    Ok(CurvePoint {
        nodes,
        ranks_per_node,
        sec_per_iter: compute + comm + consts.s,
        compute,
        comm,
        serial: consts.s,
        comm_terms,
    })
}

pub fn scaling_curve(
    nodes: &[usize],
    ranks_per_node: usize,
    consts: &ScalingConstants,
    n: usize,
) -> Result<Vec<CurvePoint>, ModelError> {
    nodes.iter().map(|&k| scaling_time(k, ranks_per_node, consts, n)).collect()
}

/// Point of minimal time per iteration; ties go to fewer nodes.
pub fn sweet_spot(curve: &[CurvePoint]) -> Result<&CurvePoint, ModelError> {
    curve
        .iter()
        .reduce(|best, p| {
            if p.sec_per_iter < best.sec_per_iter || (p.sec_per_iter == best.sec_per_iter && p.nodes < best.nodes) {
                p
            } else {
                best
            }
        })
        .ok_or(ModelError::EmptyCurve)
}

/// Pure (many ranks per node) versus hybrid (few ranks, more threads).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingComparison {
    pub pure: Vec<CurvePoint>,
    pub hybrid: Vec<CurvePoint>,
    pub pure_sweet_spot: usize,
    pub hybrid_sweet_spot: usize,
    /// Smallest node count at which hybrid is strictly faster.
    pub crossover: Option<usize>,
    /// Pure comm time over hybrid comm time, each at its own sweet spot;
    /// `None` when the hybrid comm time is zero.
    pub comm_ratio: Option<f64>,
}

pub fn compare_scaling(
    pure_rpn: usize,
    hybrid_rpn: usize,
    consts: &ScalingConstants,
    n: usize,
    nodes: &[usize],
) -> Result<ScalingComparison, ModelError> {
    let pure = scaling_curve(nodes, pure_rpn, consts, n)?;
    let hybrid = scaling_curve(nodes, hybrid_rpn, consts, n)?;
    let ps = *sweet_spot(&pure)?;
    let hs = *sweet_spot(&hybrid)?;
    let crossover = pure
        .iter()
        .zip(&hybrid)
        .filter(|(p, h)| h.sec_per_iter < p.sec_per_iter)
        .map(|(p, _)| p.nodes)
        .min();
    Ok(ScalingComparison {
        comm_ratio: (hs.comm > 0.0).then(|| ps.comm / hs.comm),
        pure_sweet_spot: ps.nodes,
        hybrid_sweet_spot: hs.nodes,
        crossover,
        pure,
        hybrid,
    })
}

/// Sweet spots the calibration must reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTarget {
    pub n: usize,
    pub nodes: Vec<usize>,
    pub pure_rpn: usize,
    pub pure_sweet_spot: usize,
    pub hybrid_rpn: usize,
    pub hybrid_sweet_spot: usize,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        Self {
            n: 1024,
            nodes: vec![16, 32, 64, 128, 256],
            pure_rpn: 28,
            pure_sweet_spot: 32,
            hybrid_rpn: 4,
            hybrid_sweet_spot: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub constants: ScalingConstants,
    /// Smallest and largest grid value of `sync_rounds` that hit the target.
    pub feasible: (f64, f64),
}

/// Grid search over `sync_rounds` (log-spaced, `1e-3 .. 1e6`) keeping all
/// other constants of `base`. Returns the geometric midpoint of the
/// feasible values.
pub fn calibrate(base: &ScalingConstants, target: &CalibrationTarget) -> Result<Calibration, ModelError> {
    const POINTS: usize = 9001;
    let (lo, hi) = (-3.0f64, 6.0f64);
    let hits = |q: f64| -> Result<bool, ModelError> {
        let c = ScalingConstants { sync_rounds: q, ..*base };
        let cmp = compare_scaling(target.pure_rpn, target.hybrid_rpn, &c, target.n, &target.nodes)?;
        Ok(cmp.pure_sweet_spot == target.pure_sweet_spot && cmp.hybrid_sweet_spot == target.hybrid_sweet_spot)
    };
    let mut feasible: Option<(f64, f64)> = None;
    for i in 0..POINTS {
        let q = 10f64.powf(lo + (hi - lo) * i as f64 / (POINTS - 1) as f64);
        if hits(q)? {
            feasible = Some(feasible.map_or((q, q), |(a, _)| (a, q)));
        }
    }
    let (a, b) = feasible.ok_or_else(|| {
        ModelError::Calibration(format!(
            "no sync_rounds in 1e{lo}..1e{hi} puts the sweet spots at {} and {} nodes",
            target.pure_sweet_spot, target.hybrid_sweet_spot
        ))
    })?;
    let q = (a * b).sqrt();
    if !hits(q)? {
        return Err(ModelError::Calibration(format!(
            "feasible set [{a}, {b}] is not an interval"
        )));
    }
    Ok(Calibration {
        constants: ScalingConstants { sync_rounds: q, ..*base },
        feasible: (a, b),
    })
}
