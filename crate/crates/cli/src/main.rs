//! `mrsi-cs`: phantom generation, schedule design, acquisition simulation,
//! reconstruction, cross-validation and evaluation.
//!
//! Every subcommand reads and writes conventionally named files in `--out`
//! and leaves a `manifest-<command>.json` there. Machine-readable summaries
//! go to stdout, diagnostics to stderr; see [`failure::Failure`] for exit codes.

mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Common, EvaluateFlags, SolverFlags};
use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "mrsi-cs", version, about = "Compressed-sensing MRSI pipeline")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Working directory for inputs and outputs.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<&CommonArgs> for Common {
    fn from(a: &CommonArgs) -> Self {
        Common {
            config: a.config.clone(),
            out: a.out.clone(),
            seed: a.seed,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct SolverArgs {
    /// Outer ADMM iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Inner iterations of the per-frame x-update.
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    lambda_x: Option<f64>,
    #[arg(long)]
    lambda_w1: Option<f64>,
    #[arg(long)]
    lambda_w2: Option<f64>,
}

impl From<&SolverArgs> for SolverFlags {
    fn from(a: &SolverArgs) -> Self {
        SolverFlags {
            iters: a.iters,
            inner_iters: a.inner_iters,
            lambda_x: a.lambda_x,
            lambda_w1: a.lambda_w1,
            lambda_w2: a.lambda_w2,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground truth and base spectra from the `phantom` section.
    Phantom(CommonArgs),
    /// Sobol sampling schedule from the `sampler` section.
    Design(CommonArgs),
    /// Noisy signals for the schedule.
    Acquire(CommonArgs),
    /// ADMM reconstruction and residual log.
    Reconstruct {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Two-fold cross-validation over the λ grid.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Use the full 12-value grid on each axis (1,728 combinations).
        #[arg(long)]
        paper_grid: bool,
    },
    /// Metrics, hottest-pixel profiles and snapshots against ground truth.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Reconstruction tensor (default: <out>/recon.mrst).
        #[arg(long)]
        recon: Option<PathBuf>,
        /// Ground-truth tensor (default: <out>/truth.mrst).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Frames to snapshot, comma separated.
        #[arg(long, value_delimiter = ',')]
        frames: Vec<usize>,
        /// Integer nearest-neighbour upscaling of snapshots.
        #[arg(long)]
        upsample: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })?;
    }
    match &cli.command {
        Command::Phantom(c) => commands::phantom(&c.into()),
        Command::Design(c) => commands::design(&c.into()),
        Command::Acquire(c) => commands::acquire_cmd(&c.into()),
        Command::Reconstruct { common, solver } => {
            commands::reconstruct(&common.into(), &solver.into())
        }
        Command::Cv {
            common,
            solver,
            paper_grid,
        } => commands::cv(&common.into(), &solver.into(), *paper_grid),
        Command::Evaluate {
            common,
            recon,
            truth,
            frames,
            upsample,
        } => commands::evaluate_cmd(
            &common.into(),
            &EvaluateFlags {
                recon: recon.clone(),
                truth: truth.clone(),
                frames: frames.clone(),
                upsample: *upsample,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MRSI_CS_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code as u8)
        }
    }
}
