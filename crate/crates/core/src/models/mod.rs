//! The four one-step-ahead forecasters behind a common [`Forecaster`] contract.

mod glm;
mod linear;
mod lstm;
mod martingale;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use glm::{fit_glm, glm_predict, GlmFit, LogLinkGlm, GLM_MAX_ITERATIONS, GLM_TOLERANCE};
pub use linear::{fit_linear, fit_linear_through_origin, LagSpec, LaggedLinear, LinearFit};
pub use lstm::{
    lstm_backward, lstm_backward_from_output, lstm_forward, ForwardTrace, LstmParams, Tensor,
};
pub use martingale::{martingale_predict, Martingale};
pub use train::{train_lstm, EpochStats, Loss, LstmForecaster, Standardizer, TrainConfig, TrainedLstm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid lag set: {0}")]
    InvalidLags(String),
    #[error("design matrix is rank deficient for lags {lags:?}")]
    SingularFit { lags: Vec<usize> },
    #[error("log link needs strictly positive values; found {value} at index {index}")]
    Domain { index: usize, value: f64 },
    #[error("Newton-Raphson diverged at iteration {iteration}")]
    FitDiverged { iteration: usize },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model used before fit")]
    NotFitted,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad parameter document: {0}")]
    Document(String),
}

/// Fit on a training window, then forecast one step ahead from true history.
///
/// `predict_next` must be deterministic given the fitted state and `history`.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> String;

    fn fit(&mut self, training: &[f64]) -> Result<(), ModelError>;

    /// Forecast of the value that follows `history`.
    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError>;

    /// Shortest history `predict_next` accepts.
    fn min_history(&self) -> usize {
        1
    }

    fn to_document(&self) -> ModelDocument;
}

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

/// Serialized model parameters: named tensors plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: String,
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

impl ModelDocument {
    pub(crate) fn new(model: &str, config: serde_json::Value) -> Self {
        Self {
            format_version: MODEL_DOCUMENT_VERSION,
            model: model.to_string(),
            config,
            tensors: BTreeMap::new(),
        }
    }

    pub(crate) fn check(&self, model: &str) -> Result<(), ModelError> {
        if self.format_version != MODEL_DOCUMENT_VERSION {
            return Err(ModelError::Document(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.model != model {
            return Err(ModelError::Document(format!(
                "expected model '{model}', found '{}'",
                self.model
            )));
        }
        Ok(())
    }

    pub(crate) fn tensor(&self, name: &str) -> Result<&[f64], ModelError> {
        self.tensors
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| ModelError::Document(format!("missing tensor '{name}'")))
    }
}

/// Declarative model choice, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Martingale,
    Linear {
        lags: Vec<usize>,
        #[serde(default = "default_true")]
        intercept: bool,
    },
    Glm,
    Lstm(TrainConfig),
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    /// Unfitted forecaster. `seed` overrides the LSTM seed so folds and
    /// replicates can be trained independently.
    pub fn build(&self, seed: Option<u64>) -> Result<Box<dyn Forecaster>, ModelError> {
        Ok(match self {
            ModelSpec::Martingale => Box::new(Martingale),
            ModelSpec::Linear { lags, intercept } => {
                Box::new(LaggedLinear::new(LagSpec::new(lags.clone())?, *intercept))
            }
            ModelSpec::Glm => Box::new(LogLinkGlm::default()),
            ModelSpec::Lstm(config) => {
                let mut config = config.clone();
                if let Some(seed) = seed {
                    config.seed = seed;
                }
                config.validate()?;
                Box::new(LstmForecaster::new(config))
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Martingale => "martingale".into(),
            ModelSpec::Linear { lags, .. } => {
                let lags: Vec<String> = lags.iter().map(usize::to_string).collect();
                format!("linear[{}]", lags.join(","))
            }
            ModelSpec::Glm => "glm".into(),
            ModelSpec::Lstm(config) => format!("lstm-{}", config.hidden_size),
        }
    }
}

pub(crate) fn last_value(history: &[f64]) -> Result<f64, ModelError> {
    history.last().copied().ok_or(ModelError::EmptyHistory)
}
