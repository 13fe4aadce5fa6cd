//! Option payoffs and a forecaster-gated mean-reversion backtest.

mod options;
mod strategy;

use thiserror::Error;

use crate::models::ModelError;

pub use options::{OptionContract, OptionSide};
pub use strategy::{run_mean_reversion, Action, Ledger, LedgerSummary, SkippedTrade, StrategyConfig, Trade};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("invalid option contract: {0}")]
    Contract(String),
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error("series has {got} bars; lookback {lookback} needs at least {}", lookback + 2)]
    TooShort { lookback: usize, got: usize },
    #[error("forecaster '{model}' failed at bar {index}: {source}")]
    Model {
        model: String,
        index: usize,
        source: ModelError,
    },
}
