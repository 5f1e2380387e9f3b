//! The numerical workload: a Newtonian ideal-MHD system and scalar
//! advection, discretized with WENO5 flux-split finite differences and
//! SSP-RK3 time stepping.
//!
//! Ideal MHD stands in for general-relativistic MHD: same variable count
//! and stencil shape, no metric terms, no divergence cleaning.

mod block;
pub mod kernel;
mod rk3;
pub mod state;
pub mod weno;

#[cfg(test)]
pub(crate) mod testutil;

use thiserror::Error;

pub use block::FieldBlock;
pub use kernel::{
    cfl_dt, compute_fluxes, divb_diagnostic, rhs, rhs_planes, speed_bound, KernelScratch,
    SpeedBound,
};
pub use rk3::{rk3_stage, rk3_step, RK3_STAGES};
pub use state::{
    cons_to_prim, max_signal_speed, mhd_flux, prim_to_cons, ModelKind, Primitive, MHD_VARS,
};
pub use weno::{weno5_left, weno5_right};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("unphysical state (rho = {rho}, p = {p}): {state:?}")]
    Unphysical { rho: f64, p: f64, state: Vec<f64> },
    #[error("non-finite state {state:?}")]
    NonFinite { state: Vec<f64> },
    #[error("static field, dt unbounded")]
    StaticField,
    #[error("CFL number {0} outside (0, 1]")]
    InvalidCfl(f64),
    #[error("div B diagnostic requires the ideal-MHD model")]
    NotMhd,
    #[error("time step must be positive, got {0}")]
    InvalidDt(f64),
}
