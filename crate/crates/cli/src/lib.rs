//! The `halo` command line: config parsing, output formats and the
//! run, sweep, model, report and verify commands.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 runtime or kernel failure,
//! 4 verification failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod snapshot;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub use commands::Context;
pub use config::{ConfigError, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "halo", version, about = "Hybrid rank x thread stencil solver and performance models")]
pub struct Cli {
    /// Output directory [default: the config's output dir, else ./out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Initial-condition perturbation seed; 0 disables it
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation, writing snapshots and a metrics report
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Repeat a run over thread and rank lists in both modes
    Sweep {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Threads per rank, e.g. 1,2,4
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        threads: Option<Vec<usize>>,
        /// Rank counts, e.g. 1,2,4,8
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        ranks: Option<Vec<usize>>,
    },
    /// Evaluate strong-scaling curves and sweet spots
    Model {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Fit sync_rounds to the reference sweet spots first
        #[arg(long)]
        calibrate: bool,
    },
    /// Speedup table from a timing CSV
    Report {
        #[arg(long, value_name = "PATH")]
        csv: PathBuf,
    },
    /// Run the self-check suites
    Verify {
        /// Suites to run (grid, physics, exec, perf, model); all by default
        #[arg(long = "suite", value_name = "NAME")]
        suites: Vec<String>,
    },
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = if informational {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return if informational { 0 } else { 1 };
        }
    };
    let mut ctx = Context {
        out,
        err,
        out_dir: cli.out,
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Run { config } => commands::run_command(&mut ctx, config),
        Command::Sweep { config, threads, ranks } => {
            commands::sweep_command(&mut ctx, config, threads.clone(), ranks.clone())
        }
        Command::Model { config, calibrate } => commands::model_command(&mut ctx, config, *calibrate),
        Command::Report { csv } => commands::report_command(&mut ctx, csv),
        Command::Verify { suites } => commands::verify_command(&mut ctx, suites),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            e.exit_code()
        }
    }
}
