//! A desk-scale hybrid-parallel stencil code and its performance toolkit.
//!
//! - [`grid`]: Cartesian domain decomposition and neighbor topology.
//! - [`physics`]: ideal MHD and scalar advection with WENO5 flux-split
//!   finite differences and SSP-RK3.
//! - [`exec`]: the rank x thread executor with halo messages and
//!   deterministic reductions.
//! - [`perf`]: region timers, spin accounting, inverse Amdahl, speedups.
//! - [`model`]: Amdahl's law and the strong-scaling model.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod grid;
pub mod model;
pub mod perf;
pub mod physics;

pub use exec::{
    run, ExecConfig, ExecError, GlobalField, InitialCondition, Mode, Problem, RankBackend, RunOutput, Schedule,
    Simulation, StepDiagnostics,
};
pub use grid::{GlobalGrid, GridError, RankLayout, Subdomain};
pub use model::{
    amdahl, calibrate, compare_scaling, scaling_curve, scaling_time, sweet_spot, CurvePoint, ModelError,
    ScalingComparison, ScalingConstants,
};
pub use perf::{imbalance, serial_fraction, speedup, MetricsReport, PerfError, Profiler, RegionRecord, Speedup};
pub use physics::{FieldBlock, ModelKind, PhysicsError};
