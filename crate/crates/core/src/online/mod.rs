//! Exponential-weights ensemble over fitted forecasters, empirical
//! discrepancy, and online-to-batch conversion.

mod discrepancy;
mod ensemble;
mod otb;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Forecaster, ModelError, ModelSpec};

pub use discrepancy::{estimate_discrepancy, DiscrepancyWeights};
pub use ensemble::{default_loss_max, run_online, EnsembleConfig, EnsembleState};
pub use otb::{candidate_windows, online_to_batch, select_window, MixtureForecaster, OtbConfig, OtbSelection, WindowScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OnlineError {
    #[error("expert set is empty")]
    NoExperts,
    #[error("expected {expected} predictions, got {got}")]
    ExpertCount { expected: usize, got: usize },
    #[error("outcome {0} is not finite")]
    NonFiniteOutcome(f64),
    #[error("every expert produced a non-finite prediction in round {0}")]
    NoFiniteExpert(usize),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("window {window} exceeds the {rounds} available rounds")]
    WindowTooLarge { window: usize, rounds: usize },
    #[error("loss matrix is ragged or empty")]
    LossShape,
    #[error("no completed rounds")]
    EmptyState,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expert '{expert}' failed at index {index}: {source}")]
    Model {
        expert: String,
        index: usize,
        source: ModelError,
    },
}

/// Settings for a fit-then-online ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    #[serde(default)]
    pub loss: LossKind,
    /// Defaults to the horizon-tuned rate.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Defaults to the 99th percentile of training-window martingale losses.
    #[serde(default)]
    pub loss_max: Option<f64>,
    #[serde(default)]
    pub otb: OtbConfig,
    /// Window of the drift column in the per-round trace.
    #[serde(default = "default_trace_window")]
    pub trace_window: usize,
}

fn default_trace_window() -> usize {
    50
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            loss: LossKind::default(),
            eta: None,
            loss_max: None,
            otb: OtbConfig::default(),
            trace_window: default_trace_window(),
        }
    }
}

pub struct EnsembleRun {
    pub state: EnsembleState,
    pub selection: OtbSelection,
    pub mixture: MixtureForecaster,
    /// Index of the first online round in the input series.
    pub first_round: usize,
}

/// Fits each expert on `values[..train_len]`, runs the ensemble over the rest
/// of the series and converts the pass to a batch mixture.
pub fn run_ensemble(
    specs: &[ModelSpec],
    values: &[f64],
    train_len: usize,
    seed: u64,
    settings: &EnsembleSettings,
) -> Result<EnsembleRun, OnlineError> {
    if specs.is_empty() {
        return Err(OnlineError::NoExperts);
    }
    if train_len < 2 || train_len >= values.len() {
        return Err(OnlineError::Config(format!(
            "training length {train_len} must lie in [2, {})",
            values.len()
        )));
    }
    let training = &values[..train_len];
    let mut experts: Vec<Box<dyn Forecaster>> = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut expert = spec.build(Some(seed)).map_err(|source| OnlineError::Model {
            expert: spec.label(),
            index: 0,
            source,
        })?;
        expert.fit(training).map_err(|source| OnlineError::Model {
            expert: spec.label(),
            index: train_len,
            source,
        })?;
        experts.push(expert);
    }
    let first_round = experts
        .iter()
        .map(|e| e.min_history())
        .max()
        .unwrap_or(1)
        .max(train_len);
    if first_round >= values.len() {
        return Err(OnlineError::EmptyState);
    }
    let rounds = values.len() - first_round;
    let loss_max = settings
        .loss_max
        .unwrap_or_else(|| default_loss_max(training, settings.loss));
    let mut config = EnsembleConfig::tuned(experts.len(), rounds, loss_max, settings.loss);
    if let Some(eta) = settings.eta {
        config.eta = eta;
    }
    let state = run_online(&experts, values, first_round..values.len(), config)?;
    let (mixture, selection) = online_to_batch(&state, experts, &settings.otb)?;
    Ok(EnsembleRun {
        state,
        selection,
        mixture,
        first_round,
    })
}

/// Per-round loss of a prediction against the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Squared,
    Absolute,
}

impl LossKind {
    pub fn loss(self, prediction: f64, outcome: f64) -> f64 {
        let d = prediction - outcome;
        match self {
            LossKind::Squared => d * d,
            LossKind::Absolute => d.abs(),
        }
    }
}
