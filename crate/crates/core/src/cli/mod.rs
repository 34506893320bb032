//! Command-line front end: `generate`, `sample`, `recover`, `evaluate`, `sweep`.
//!
//! Exit codes: 0 converged (or nothing to converge), 1 usage or I/O error,
//! 2 iteration cap reached, 3 divergence.

mod commands;
mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::imaging::Rect;
use crate::model::{SamplingScheme, Termination};

pub use experiment::{load_frame, meta_path, read_meta, ExperimentConfig, DEFAULT_SR_LIST};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Tol => EXIT_OK,
        Termination::MaxIters => EXIT_MAX_ITERS,
        Termination::Diverged => EXIT_DIVERGED,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lrjs",
    version,
    about = "Recover sub-sampled multi-channel ultrasound RF data with a low-rank, joint-sparse spectral model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic low-rank joint-sparse frame or a scatterer phantom frame.
    Generate(GenerateArgs),
    /// Draw a random sampling mask for a frame.
    Sample(SampleArgs),
    /// Sub-sample a frame and reconstruct it.
    Recover(RecoverArgs),
    /// B-mode images, CNR and relative error of a reconstruction.
    Evaluate(EvaluateArgs),
    /// Recover at several sampling rates, with and without the nuclear-norm term.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Synthetic,
    Phantom,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Phantom description (key = value).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Samples per channel [synthetic: 128, phantom: 1024].
    #[arg(long)]
    pub m: Option<usize>,
    /// Channels [64].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    /// Non-zero rows of the spectral coefficients.
    #[arg(long, default_value_t = 8)]
    pub ksparse: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Centre frequency in Hz [synthetic: 2.25e6, phantom: 3.5e6].
    #[arg(long)]
    pub fc: Option<f64>,
    /// Sampling frequency in Hz [25e6].
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long)]
    pub sr: f64,
    #[arg(long, default_value_t = SamplingScheme::UniformGlobal)]
    pub scheme: SamplingScheme,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "mask.lrjs")]
    pub out: PathBuf,
}

/// Solver flags shared by `recover` and `sweep`; each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct SolverArgs {
    /// Key = value experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub scheme: Option<SamplingScheme>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Override the centre frequency recorded next to the frame.
    #[arg(long)]
    pub fc: Option<f64>,
    /// Override the sampling frequency recorded next to the frame.
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub frame: PathBuf,
    #[arg(long, conflicts_with = "pattern")]
    pub sr: Option<f64>,
    /// 0/1 mask written by `sample`.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Drop the nuclear-norm term.
    #[arg(long)]
    pub sparsity_only: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub reconstruction: PathBuf,
    /// Target region as row0,col0,rows,cols.
    #[arg(long)]
    pub target: Option<Rect>,
    /// Background region as row0,col0,rows,cols.
    #[arg(long)]
    pub background: Option<Rect>,
    #[arg(long)]
    pub dynamic_range_db: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub fc: Option<f64>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub frame: PathBuf,
    /// Comma-separated sampling rates [0.05,0.1,0.2,0.3].
    #[arg(long)]
    pub sr_list: Option<String>,
    #[arg(long)]
    pub target: Option<Rect>,
    #[arg(long)]
    pub background: Option<Rect>,
    #[arg(long)]
    pub dynamic_range_db: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("LRJS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("LRJS_THREADS must be a positive integer, got {value:?}")))?;
    // Fails only if a pool already exists, which is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Parses `std::env::args` and runs the command; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Recover(a) => commands::recover(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    });
    match result {
        Ok(code) => code,
        Err(e @ Error::Diverged { .. }) => {
            eprintln!("error: {e}");
            EXIT_DIVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
