use std::path::Path;

use thiserror::Error;
use tsbench_core::backtest::BacktestError;
use tsbench_core::eval::EvalError;
use tsbench_core::generate::GeneratorError;
use tsbench_core::ingest::IngestError;
use tsbench_core::online::OnlineError;
use tsbench_core::ModelError;

/// Command failure, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl CliError {
    /// 2 config, 3 data, 4 model or numerical, 5 transport or throttling.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Model(_) => 4,
            CliError::Transport(_) => 5,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Throttled(_) | IngestError::Transport(_) => CliError::Transport(e.to_string()),
            IngestError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::InvalidLags(_) => CliError::Config(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Split(_) => CliError::Config(e.to_string()),
            EvalError::TooShort { .. } | EvalError::Empty => CliError::Data(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<OnlineError> for CliError {
    fn from(e: OnlineError) -> Self {
        match e {
            OnlineError::Config(_) | OnlineError::Weights(_) => CliError::Config(e.to_string()),
            OnlineError::NonFiniteOutcome(_) | OnlineError::EmptyState => CliError::Data(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Config(_) | BacktestError::Contract(_) => CliError::Config(e.to_string()),
            BacktestError::TooShort { .. } => CliError::Data(e.to_string()),
            BacktestError::Model { .. } => CliError::Model(e.to_string()),
        }
    }
}

impl From<tsbench_core::series::SeriesError> for CliError {
    fn from(e: tsbench_core::series::SeriesError) -> Self {
        CliError::Data(e.to_string())
    }
}
