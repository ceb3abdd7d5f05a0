//! `blscale`: load or generate Brascamp–Lieb data, run the scaling flow and
//! the oracles, and write traces and reports.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 non-convergence,
//! mismatch against recorded values, or a failed sandwich check.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "blscale", version, about = "Brascamp-Lieb scaling flow toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Args)]
pub struct Shared {
    /// Directory for output files
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Target isotropy defect
    #[arg(long, global = true, value_name = "F")]
    pub geo_tol: Option<f64>,
    /// Maximum number of flow iterations
    #[arg(long, global = true, value_name = "N")]
    pub max_iters: Option<usize>,
    /// Minimum decrease of the cumulative log-scale over 10 iterations (per iteration)
    #[arg(long, global = true, value_name = "F")]
    pub stall_tol: Option<f64>,
    /// Seed for random generators and gaussian sampling
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for multi-file batches
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check structure, geometricity and necessary feasibility conditions
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the scaling flow and write trace files
    Flow {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Estimate the BL constant and compare with recorded and oracle values
    Bl {
        file: PathBuf,
        /// Allowed deviation of the log-estimate from a recorded value
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Grid points per axis for the rank-one oracle
        #[arg(long, default_value_t = 25)]
        grid: usize,
    },
    /// Gaussian lower bounds on the BL constant
    Gaussian {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        /// Extra fixed-point runs from random starts
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        #[arg(long, default_value_t = 25)]
        grid: usize,
    },
    /// Check the adjoint BL sandwich over a gaussian family
    Adjoint {
        file: PathBuf,
        /// Comma-separated weights summing to 1 (default: uniform)
        #[arg(long, value_name = "CSV")]
        theta: Option<String>,
        #[arg(long, value_name = "F")]
        p: f64,
        /// Random positive definite draws in the family
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
    /// Write a named example datum as JSON
    Generate {
        /// holder, loomis-whitney, remark or random-feasible
        name: String,
        #[arg(long)]
        n: Option<usize>,
        /// Exponents (comma separated)
        #[arg(long, value_name = "CSV")]
        c: Option<String>,
        /// Target dimensions (comma separated), random-feasible only
        #[arg(long, value_name = "CSV")]
        dims: Option<String>,
        /// Angle of the third direction, remark only
        #[arg(long)]
        angle: Option<f64>,
        /// Condition-number bound of the random equivalence
        #[arg(long, default_value_t = blscale_core::library::DEFAULT_MAX_CONDITION)]
        max_cond: f64,
    },
    /// Run the built-in examples end to end
    Demo,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BLSCALE_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
