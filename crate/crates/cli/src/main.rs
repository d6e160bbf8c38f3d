//! `nhmm`: train, forecast with, and evaluate neural hidden Markov
//! forecasters from the command line.
//!
//! Every command is deterministic given its config, seed, and data; set
//! `NHMM_THREADS` to cap internal parallelism without changing results.
//! Exit codes separate failure classes: 2 for config errors, 3 for data
//! errors, 4 for numerical divergence, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nhmm_cli::commands;
use nhmm_cli::commands::evaluate::OutputFormat;
use nhmm_core::Error;

#[derive(Parser)]
#[command(name = "nhmm", version, about = "Neural hidden Markov forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a dataset and write a checkpoint.
    Train {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast every series past its last observation.
    Forecast {
        /// Checkpoint written by `train` or `gridsearch`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest (JSON).
        #[arg(long)]
        data: PathBuf,
        /// Sampled futures per series; 0 writes a mean-only table.
        #[arg(long, default_value_t = 100)]
        n_traj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score a forecast table against the observed values.
    Evaluate {
        /// Forecast table written by `forecast`.
        #[arg(long)]
        forecasts: PathBuf,
        /// Dataset manifest (JSON).
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of mase, mse, mae.
        #[arg(long, default_value = "mase,mse,mae")]
        metric: String,
        /// Series per difficulty subsample; skipped when the corpus is
        /// too small to fill both.
        #[arg(long, default_value_t = 1000)]
        subsample_size: usize,
        #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
        format: OutputFormat,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Draw a synthetic regime-switching corpus.
    Simulate {
        /// Generator spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep hyperparameters and keep the best model.
    Gridsearch {
        /// Sweep configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Replaces the configured replicate seeds with one seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Data(_) | Error::Metric(_) | Error::Io(_) | Error::Csv(_) => 3,
        Error::Numerical(_) => 4,
        Error::Shape { .. } => 1,
    }
}

fn main() -> ExitCode {
    nhmm_core::runtime::init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed, out } => commands::train::run(&config, seed, out),
        Command::Forecast { checkpoint, data, n_traj, seed, out } => {
            commands::forecast::run(&checkpoint, &data, n_traj, seed, &out)
        }
        Command::Evaluate { forecasts, data, metric, subsample_size, format, out } => {
            commands::evaluate::run(&forecasts, &data, &metric, subsample_size, format, &out)
        }
        Command::Simulate { spec, seed, out } => commands::simulate::run(&spec, seed, &out),
        Command::Gridsearch { config, seed, out } => commands::gridsearch::run(&config, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
