//! Experiment runner behind the `tsbench` binary.
//!
//! Each subcommand reads one declarative TOML config, runs the experiment and
//! writes its outputs atomically under the output directory. Identical config
//! and cache state give byte-identical outputs.

pub mod commands;
pub mod config;
pub mod error;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tsbench_core::ingest::Transport;

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tsbench", version, about = "Forecasting experiments against the martingale baseline")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for folds and replicates (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download daily bars into the local cache (reads ALPHAVANTAGE_API_KEY).
    Fetch {
        /// Ticker; defaults to the config's alphavantage source.
        #[arg(long)]
        symbol: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Write the config's generated series as CSV.
    Simulate,
    /// Score every configured model against the martingale.
    Evaluate,
    /// Run the expert ensemble and online-to-batch selection.
    Ensemble,
    /// Run the mean-reversion backtest.
    Backtest,
}

/// Runs one command. Returns the files written.
pub fn run<T: Transport + Sync>(cli: &Cli, transport: &T) -> Result<Vec<PathBuf>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli, transport))
}

fn dispatch<T: Transport + Sync>(cli: &Cli, transport: &T) -> Result<Vec<PathBuf>, CliError> {
    if let Command::Fetch { symbol, cache_dir } = &cli.command {
        let config = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
        return commands::fetch(config.as_ref(), symbol.as_deref(), cache_dir.as_deref(), transport);
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --config <file>".into()))?;
    let config = ExperimentConfig::load(path)?;
    let out = output::Outputs::new(output_dir(cli, &config), config.name());
    match cli.command {
        Command::Fetch { .. } => unreachable!("handled above"),
        Command::Simulate => commands::simulate(&config, out),
        Command::Evaluate => commands::evaluate(&config, out, transport),
        Command::Ensemble => commands::ensemble(&config, out, transport),
        Command::Backtest => commands::backtest(&config, out, transport),
    }
}

fn output_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
