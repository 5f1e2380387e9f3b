//! Two-level parallel executor.
//!
//! The rank layer runs share-nothing workers that exchange halos only
//! through value-copy messages; the thread layer runs fork-join loops over
//! z-planes inside each rank with private per-worker scratch. Every
//! cross-rank combination uses a fixed reduction tree, so final fields are
//! a pure function of the problem and the number of steps.

mod driver;
pub mod halo;
mod problem;
mod reduce;
mod schedule;

use serde::Serialize;
use thiserror::Error;

use crate::grid::GridError;
use crate::physics::PhysicsError;

pub use driver::{run, GlobalField, RunOutput, Simulation, StepDiagnostics};
pub use halo::{halo_exchange, HaloMessage};
pub use problem::{InitialCondition, Problem, PERTURBATION};
pub use reduce::{ordered_reduce, ReduceOp};
pub use schedule::{guided_chunks, static_chunks, Mode, Schedule, ThreadTeam};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("step {step}, rank {rank}: {source}")]
    Kernel {
        step: u64,
        rank: usize,
        #[source]
        source: PhysicsError,
    },
    #[error("step {step}: {source}")]
    Global {
        step: u64,
        #[source]
        source: PhysicsError,
    },
    #[error("halo protocol error: {0}")]
    Protocol(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("reduction over no values")]
    EmptyReduction,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// How ranks are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankBackend {
    /// All ranks on the control thread, round-robin per phase.
    Sequential,
    /// One OS thread per rank during each phase.
    Concurrent,
}

/// Rank x thread configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExecConfig {
    pub ranks: usize,
    pub threads_per_rank: usize,
    pub schedule: Schedule,
    pub mode: Mode,
    pub backend: RankBackend,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            ranks: 1,
            threads_per_rank: 1,
            schedule: Schedule::Static,
            mode: Mode::Optimized,
            backend: RankBackend::Sequential,
        }
    }
}

impl ExecConfig {
    pub fn new(ranks: usize, threads_per_rank: usize) -> Self {
        Self {
            ranks,
            threads_per_rank,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        if self.ranks == 0 || self.threads_per_rank == 0 {
            return Err(ExecError::Config("ranks and threads must be at least 1".into()));
        }
        if let Schedule::Guided { min_chunk: 0 } = self.schedule {
            return Err(ExecError::Config("guided min_chunk must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cores(&self) -> usize {
        self.ranks * self.threads_per_rank
    }

    /// Warning text when the configuration oversubscribes `budget` cores.
    pub fn oversubscription(&self, budget: usize) -> Option<String> {
        (self.cores() > budget).then(|| {
            format!(
                "{} ranks x {} threads = {} workers exceeds the core budget of {budget}",
                self.ranks,
                self.threads_per_rank,
                self.cores()
            )
        })
    }
}
