use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossKind, OnlineError};
use crate::eval::csv_field;
use crate::models::Forecaster;

/// Learning rate, clipping bound and loss for an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub eta: f64,
    /// Losses are clipped to `[0, loss_max]` before entering the update.
    pub loss_max: f64,
    pub loss: LossKind,
}

impl EnsembleConfig {
    /// `eta = sqrt(8 ln N / T) / loss_max`, the horizon-tuned rate for losses
    /// rescaled to `[0, 1]`.
    pub fn tuned(n_experts: usize, horizon: usize, loss_max: f64, loss: LossKind) -> Self {
        let n = n_experts.max(1) as f64;
        let t = horizon.max(1) as f64;
        Self {
            eta: (8.0 * n.ln() / t).sqrt() / loss_max,
            loss_max,
            loss,
        }
    }

    pub fn validate(&self) -> Result<(), OnlineError> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(OnlineError::Config(format!("eta {} must be finite and >= 0", self.eta)));
        }
        if !(self.loss_max.is_finite() && self.loss_max > 0.0) {
            return Err(OnlineError::Config(format!(
                "loss_max {} must be finite and > 0",
                self.loss_max
            )));
        }
        Ok(())
    }
}

/// 99th percentile (linear interpolation) of the martingale's one-step losses
/// over `training`. Falls back to 1 when every loss is zero.
pub fn default_loss_max(training: &[f64], loss: LossKind) -> f64 {
    let mut losses: Vec<f64> = training
        .windows(2)
        .map(|w| loss.loss(w[0], w[1]))
        .filter(|l| l.is_finite())
        .collect();
    if losses.is_empty() {
        return 1.0;
    }
    losses.sort_by(f64::total_cmp);
    let pos = 0.99 * (losses.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let p = losses[lo] + (pos - lo as f64) * (losses[hi] - losses[lo]);
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

/// Exponential-weights state over a fixed, ordered expert set.
///
/// Weights are kept in log space and renormalized every round, so they stay
/// a probability vector however extreme the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    names: Vec<String>,
    config: EnsembleConfig,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    cumulative_losses: Vec<f64>,
    ensemble_total: f64,
    /// `[expert][round]`, unclipped.
    expert_losses: Vec<Vec<f64>>,
    ensemble_losses: Vec<f64>,
    /// Weights in force at each round, before its update.
    weight_history: Vec<Vec<f64>>,
    flagged: Vec<Vec<usize>>,
    outcomes: Vec<f64>,
    predictions: Vec<f64>,
    /// `[expert][round]`, as submitted to `step`.
    expert_predictions: Vec<Vec<f64>>,
}

impl EnsembleState {
    pub fn new(names: Vec<String>, config: EnsembleConfig) -> Result<Self, OnlineError> {
        if names.is_empty() {
            return Err(OnlineError::NoExperts);
        }
        config.validate()?;
        let n = names.len();
        let log_w = -(n as f64).ln();
        Ok(Self {
            config,
            log_weights: vec![log_w; n],
            weights: vec![1.0 / n as f64; n],
            cumulative_losses: vec![0.0; n],
            ensemble_total: 0.0,
            expert_losses: vec![Vec::new(); n],
            ensemble_losses: Vec::new(),
            weight_history: Vec::new(),
            flagged: Vec::new(),
            outcomes: Vec::new(),
            predictions: Vec::new(),
            expert_predictions: vec![Vec::new(); n],
            names,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn n_experts(&self) -> usize {
        self.names.len()
    }

    /// Completed rounds.
    pub fn round(&self) -> usize {
        self.ensemble_losses.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative_losses(&self) -> &[f64] {
        &self.cumulative_losses
    }

    pub fn ensemble_loss(&self) -> f64 {
        self.ensemble_total
    }

    /// Unclipped per-round losses, indexed `[expert][round]`.
    pub fn expert_losses(&self) -> &[Vec<f64>] {
        &self.expert_losses
    }

    pub fn ensemble_losses(&self) -> &[f64] {
        &self.ensemble_losses
    }

    pub fn weight_history(&self) -> &[Vec<f64>] {
        &self.weight_history
    }

    /// Experts whose prediction was non-finite, per round.
    pub fn flagged(&self) -> &[Vec<usize>] {
        &self.flagged
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// Ensemble predictions from `step` rounds.
    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    /// Raw expert predictions from `step` rounds, `[expert][round]`.
    pub fn expert_predictions(&self) -> &[Vec<f64>] {
        &self.expert_predictions
    }

    /// Cumulative ensemble loss minus the best expert's cumulative loss.
    pub fn regret(&self) -> f64 {
        let best = self
            .cumulative_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        self.ensemble_total - best
    }

    /// One round: predict with the current weights, observe `outcome`, update.
    /// Returns the ensemble prediction.
    pub fn step(&mut self, predictions: &[f64], outcome: f64) -> Result<f64, OnlineError> {
        self.check_len(predictions.len())?;
        if !outcome.is_finite() {
            return Err(OnlineError::NonFiniteOutcome(outcome));
        }
        let round = self.round();
        // renormalize over the finite experts in log space, so the mixture is
        // defined even when their linear-scale weights have underflowed
        let max = self
            .log_weights
            .iter()
            .zip(predictions)
            .filter(|(_, p)| p.is_finite())
            .map(|(lw, _)| *lw)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(OnlineError::NoFiniteExpert(round));
        }
        let mut mass = 0.0;
        let mut mixed = 0.0;
        for (lw, p) in self.log_weights.iter().zip(predictions) {
            if p.is_finite() {
                let q = (lw - max).exp();
                mass += q;
                mixed += q * p;
            }
        }
        let prediction = mixed / mass;
        let mut flagged = Vec::new();
        let losses: Vec<f64> = predictions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.is_finite() {
                    self.config.loss.loss(*p, outcome)
                } else {
                    flagged.push(i);
                    self.config.loss_max
                }
            })
            .collect();
        let ensemble = self.config.loss.loss(prediction, outcome);
        self.record(&losses, ensemble, flagged);
        self.outcomes.push(outcome);
        self.predictions.push(prediction);
        for (column, p) in self.expert_predictions.iter_mut().zip(predictions) {
            column.push(*p);
        }
        Ok(prediction)
    }

    /// Round driven directly by expert losses; the ensemble suffers the
    /// weighted average `Σ qᵢ ℓᵢ`. This is the form the regret bound speaks to.
    pub fn update_with_losses(&mut self, losses: &[f64]) -> Result<f64, OnlineError> {
        self.check_len(losses.len())?;
        let mut flagged = Vec::new();
        let losses: Vec<f64> = losses
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if l.is_finite() {
                    *l
                } else {
                    flagged.push(i);
                    self.config.loss_max
                }
            })
            .collect();
        let ensemble: f64 = self.weights.iter().zip(&losses).map(|(q, l)| q * l).sum();
        self.record(&losses, ensemble, flagged);
        Ok(ensemble)
    }

    fn check_len(&self, got: usize) -> Result<(), OnlineError> {
        if got != self.n_experts() {
            return Err(OnlineError::ExpertCount {
                expected: self.n_experts(),
                got,
            });
        }
        Ok(())
    }

    fn record(&mut self, losses: &[f64], ensemble: f64, flagged: Vec<usize>) {
        self.weight_history.push(self.weights.clone());
        for (i, &l) in losses.iter().enumerate() {
            self.cumulative_losses[i] += l;
            self.expert_losses[i].push(l);
            let clipped = l.clamp(0.0, self.config.loss_max);
            self.log_weights[i] -= self.config.eta * clipped;
        }
        self.ensemble_total += ensemble;
        self.ensemble_losses.push(ensemble);
        self.flagged.push(flagged);
        self.normalize();
    }

    fn normalize(&mut self) {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self.log_weights.iter().map(|l| (l - max).exp()).sum();
        let log_norm = max + sum.ln();
        for (lw, w) in self.log_weights.iter_mut().zip(&mut self.weights) {
            *lw -= log_norm;
            *w = lw.exp();
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }

    /// Per-round trace: weights in force, losses, the ensemble prediction and a
    /// drift signal comparing the uniform average over all past rounds with
    /// the most recent `window` rounds.
    pub fn trace_csv(&self, window: usize) -> String {
        let window = window.max(1);
        let mut out = String::from("round,outcome,prediction");
        for prefix in ["q", "loss"] {
            for name in &self.names {
                let _ = write!(out, ",{}", csv_field(&format!("{prefix}:{name}")));
            }
        }
        out.push_str(",ensemble_loss,discrepancy,flagged\n");
        let n = self.n_experts();
        let mut prefix = vec![vec![0.0]; n];
        for (i, p) in prefix.iter_mut().enumerate() {
            for l in &self.expert_losses[i] {
                let last = *p.last().expect("seeded");
                p.push(last + l);
            }
        }
        for t in 0..self.round() {
            let seen = t + 1;
            let recent = window.min(seen);
            let disc = (0..n)
                .map(|i| {
                    let all = prefix[i][seen] / seen as f64;
                    let tail = (prefix[i][seen] - prefix[i][seen - recent]) / recent as f64;
                    (tail - all).abs()
                })
                .fold(0.0, f64::max);
            let outcome = self.outcomes.get(t).copied().unwrap_or(f64::NAN);
            let prediction = self.predictions.get(t).copied().unwrap_or(f64::NAN);
            let _ = write!(out, "{t},{outcome},{prediction}");
            for q in &self.weight_history[t] {
                let _ = write!(out, ",{q}");
            }
            for i in 0..n {
                let _ = write!(out, ",{}", self.expert_losses[i][t]);
            }
            let flagged: Vec<String> = self.flagged[t]
                .iter()
                .map(|&i| self.names[i].clone())
                .collect();
            let _ = writeln!(
                out,
                ",{},{disc},{}",
                self.ensemble_losses[t],
                csv_field(&flagged.join(";"))
            );
        }
        out
    }
}

/// Runs the ensemble over `values[range]`, each round predicting `values[t]`
/// from `values[..t]`. Experts predict in parallel; the update is sequential.
pub fn run_online(
    experts: &[Box<dyn Forecaster>],
    values: &[f64],
    range: Range<usize>,
    config: EnsembleConfig,
) -> Result<EnsembleState, OnlineError> {
    let names = experts.iter().map(|e| e.name()).collect();
    let mut state = EnsembleState::new(names, config)?;
    for t in range {
        let history = &values[..t];
        let predictions = experts
            .par_iter()
            .map(|e| {
                e.predict_next(history).map_err(|source| OnlineError::Model {
                    expert: e.name(),
                    index: t,
                    source,
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        state.step(&predictions, values[t])?;
    }
    Ok(state)
}
