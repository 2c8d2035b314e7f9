//! The `kinflow` command line: argument parsing, configuration resolution
//! and the run-directory conventions shared by every subcommand.
//!
//! Configuration comes from an optional TOML file (`--config`), then the
//! subcommand's own flags, then dotted overrides such as
//! `--train.learning_rate=3e-4` or `--set solver.atol=1e-3`.

mod commands;
mod config;
mod run_dir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{BenchReport, MockSummary, SampleSummary, SmearSummary, TimingStats};
pub use config::{
    BenchSection, DatasetSection, EvalSection, ModelSection, PreprocessSection, RunConfig, SampleSection, Task,
};
pub use run_dir::{sha256_file, Manifest, ManifestInput};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "kinflow", version, about = "Flow-matching event generation, unfolding and validation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for sampling and nearest-neighbour search. Results do
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Configuration override `section.key=value`; `--section.key=value` is
    /// accepted as a shorthand.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic 1D dataset.
    Mock(MockArgs),
    /// Smear a 10-feature truth file into a paired truth/detector file.
    Smear(SmearArgs),
    /// Train a velocity network.
    Train(TrainArgs),
    /// Generate events from an unconditional checkpoint.
    Sample(SampleArgs),
    /// Unfold detector-level events with a conditional checkpoint.
    Unfold(UnfoldArgs),
    /// Compare generated events against truth.
    Eval(EvalArgs),
    /// Time training iterations and inference.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct MockArgs {
    /// Mock family, e.g. gaussian, bimodal-asym, delta.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Location of a delta mock.
    #[arg(long)]
    pub loc: Option<f64>,
    /// Constant added to every sample.
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SmearArgs {
    /// Truth event file with 10 features.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Task>,
    /// Event file; unfolding needs a paired file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub validation_subset: Option<usize>,
    /// Continue from a checkpoint, keeping its epoch numbering.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sets both solver tolerances.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UnfoldArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Detector-level events (plain file, or the detector block of a paired file).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gen: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Training events; enables the nearest-neighbour block.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Write per-feature histogram counts.
    #[arg(long)]
    pub histograms: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Events for the training timing (synthetic normal batches otherwise).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Splits `--section.key=value` / `--section.key value` shorthands out of
/// the argument list, returning the remaining arguments and the overrides.
pub fn split_dotted_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<String>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        let dotted = s
            .strip_prefix("--")
            .filter(|body| body.split('=').next().is_some_and(|k| k.contains('.') && !k.starts_with('.')));
        match dotted {
            Some(body) if body.contains('=') => overrides.push(body.to_string()),
            Some(body) => {
                let key = body.to_string();
                let value = it.next().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
                overrides.push(format!("{key}={value}"));
            }
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (args, dotted) = split_dotted_overrides(args.into_iter().map(Into::into).collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli, &dotted) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
