//! `nesy-bench`: generate data, train the controller, run experiment
//! matrices and compare runs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 reasoner backend unreachable.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nesy_control::Error;

#[derive(Parser, Debug)]
#[command(name = "nesy-bench", version, about = "Language-conditioned planar control benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that override the config file. Lists accept repeats or commas.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Policies to evaluate: llm_only, dl_only, llm_dl.
    #[arg(long, global = true, value_delimiter = ',')]
    pub policy: Vec<String>,
    /// Reasoner model names.
    #[arg(long, global = true, value_delimiter = ',')]
    pub model: Vec<String>,
    /// Tasks: right_of, left_of, above, below.
    #[arg(long, global = true, value_delimiter = ',')]
    pub task: Vec<String>,
    /// Episodes per cell.
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    /// Training seed and evaluation batch seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reasoner backend: oracle, noisy or live.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Label error probability of the noisy backend.
    #[arg(long, global = true)]
    pub error_rate: Option<f64>,
    /// Live model server URL. Also read from NESY_ENDPOINT.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Concurrent episodes. Results are identical for any value.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic training dataset as CSV.
    GenData,
    /// Train the controller; writes the model and its loss curve.
    Train,
    /// Run the policy × model × task matrix and write reports.
    Eval,
    /// Compare two evaluated runs.
    Compare {
        /// Baseline run directory (or its summary.json).
        base: PathBuf,
        /// Hybrid run directory (or its summary.json).
        hybrid: PathBuf,
        /// Policy taken from the baseline run.
        #[arg(long)]
        base_policy: Option<String>,
        /// Policy taken from the hybrid run.
        #[arg(long)]
        hybrid_policy: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFiniteLoss { .. } | Error::Shape(_) => 3,
        Error::Backend(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData => commands::gen_data(&cli.overrides),
        Command::Train => commands::train(&cli.overrides),
        Command::Eval => commands::eval(&cli.overrides),
        Command::Compare {
            base,
            hybrid,
            base_policy,
            hybrid_policy,
        } => commands::compare(&base, &hybrid, base_policy, hybrid_policy, &cli.overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
