//! `mambasl`: inspect UEA datasets, train, grid-search, run ablations and
//! verify gradients.
//!
//! Exit codes: 0 success, 1 usage or schema error, 2 data error, 3 numeric
//! failure.

mod ablate;
mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::ablate::Hypothesis;
use crate::failure::exit_code;

#[derive(Parser, Debug)]
#[command(name = "mambasl", version, about = "Single-layer selective SSM classifier for multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the shape of a `.ts` file.
    Inspect { path: PathBuf },
    /// Train one model from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every configuration of a search space.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the variants of one ablation on a dataset directory.
    Ablate {
        /// Directory holding `<Name>_TRAIN.ts` and `<Name>_TEST.ts`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        which: Hypothesis,
        /// Optional JSON run config supplying the base model and training
        /// settings (its dataset paths are ignored).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient in float64.
    Gradcheck {
        /// tiny, depth or small.
        #[arg(long, default_value = "tiny")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one analytic gradient (negative control).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Inspect { path } => commands::inspect(&path),
        Command::Train { config, out } => commands::train(&config, out),
        Command::Grid { config, jobs, out } => commands::grid(&config, jobs, out),
        Command::Ablate { data, which, config, epochs, jobs, out } => {
            ablate::run(&data, which, config.as_deref(), epochs, jobs.unwrap_or(1), out)
        }
        Command::Gradcheck { preset, seed, corrupt } => commands::gradcheck(&preset, seed, corrupt),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
