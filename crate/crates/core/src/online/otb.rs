use serde::{Deserialize, Serialize};

use super::{estimate_discrepancy, DiscrepancyWeights, EnsembleState, OnlineError};
use crate::models::{Forecaster, ModelDocument, ModelError};

/// Window selection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtbConfig {
    /// Confidence level of the `‖q‖₂` complexity term.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Recent target window; defaults to the smallest candidate.
    #[serde(default)]
    pub target_window: Option<usize>,
}

fn default_delta() -> f64 {
    0.05
}

impl Default for OtbConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            target_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window: usize,
    pub discrepancy: f64,
    pub weighted_loss: f64,
    pub penalty: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtbSelection {
    pub window: usize,
    pub target_window: usize,
    pub scores: Vec<WindowScore>,
    /// Expert weights of the batch mixture.
    pub expert_weights: Vec<f64>,
}

/// Suffix windows `T, T/2, T/4, T/8` (deduplicated, at least 1), largest first.
pub fn candidate_windows(rounds: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [1, 2, 4, 8].iter().map(|d| (rounds / d).max(1)).collect();
    out.dedup();
    out
}

/// Chooses the suffix window minimizing
/// `discrepancy + Σ q(t)·ensemble_loss(t) + loss_max·‖q‖₂·√(2 ln(1/δ))`.
///
/// Losses enter clipped to `[0, loss_max]`. Ties go to the larger window.
pub fn select_window(state: &EnsembleState, config: &OtbConfig) -> Result<OtbSelection, OnlineError> {
    let rounds = state.round();
    if rounds == 0 {
        return Err(OnlineError::EmptyState);
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(OnlineError::Config(format!("delta {} outside (0, 1)", config.delta)));
    }
    let candidates = candidate_windows(rounds);
    let target = config
        .target_window
        .unwrap_or(*candidates.last().expect("nonempty"));
    let loss_max = state.config().loss_max;
    let clip = |row: &[f64]| -> Vec<f64> { row.iter().map(|l| l.clamp(0.0, loss_max)).collect() };
    let losses: Vec<Vec<f64>> = state.expert_losses().iter().map(|r| clip(r)).collect();
    let ensemble = clip(state.ensemble_losses());
    let confidence = (2.0 * (1.0 / config.delta).ln()).sqrt();

    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64, DiscrepancyWeights)> = None;
    for &s in &candidates {
        let weights = DiscrepancyWeights::suffix_uniform(rounds, s, target)?;
        let discrepancy = estimate_discrepancy(&losses, &weights)?;
        let weighted_loss = weights.weighted_mean(&ensemble);
        let penalty = loss_max * weights.l2_norm() * confidence;
        let objective = discrepancy + weighted_loss + penalty;
        scores.push(WindowScore {
            window: s,
            discrepancy,
            weighted_loss,
            penalty,
            objective,
        });
        if best.as_ref().is_none_or(|(_, o, _)| objective < *o) {
            best = Some((s, objective, weights));
        }
    }
    let (window, _, weights) = best.expect("at least one candidate");
    let n = state.n_experts();
    let mut expert_weights = vec![0.0; n];
    for (q, w) in weights.q_time().iter().zip(state.weight_history()) {
        for i in 0..n {
            expert_weights[i] += q * w[i];
        }
    }
    let total: f64 = expert_weights.iter().sum();
    for w in &mut expert_weights {
        *w /= total;
    }
    Ok(OtbSelection {
        window,
        target_window: target,
        scores,
        expert_weights,
    })
}

/// Fixed convex combination of fitted experts.
pub struct MixtureForecaster {
    experts: Vec<Box<dyn Forecaster>>,
    weights: Vec<f64>,
}

impl MixtureForecaster {
    pub fn new(experts: Vec<Box<dyn Forecaster>>, weights: Vec<f64>) -> Result<Self, OnlineError> {
        if experts.is_empty() {
            return Err(OnlineError::NoExperts);
        }
        if experts.len() != weights.len() {
            return Err(OnlineError::ExpertCount {
                expected: experts.len(),
                got: weights.len(),
            });
        }
        Ok(Self { experts, weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn experts(&self) -> &[Box<dyn Forecaster>] {
        &self.experts
    }
}

impl Forecaster for MixtureForecaster {
    fn name(&self) -> String {
        "otb-mixture".into()
    }

    fn fit(&mut self, training: &[f64]) -> Result<(), ModelError> {
        for e in &mut self.experts {
            e.fit(training)?;
        }
        Ok(())
    }

    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError> {
        let mut sum = 0.0;
        for (e, w) in self.experts.iter().zip(&self.weights) {
            if *w != 0.0 {
                sum += w * e.predict_next(history)?;
            }
        }
        Ok(sum)
    }

    fn min_history(&self) -> usize {
        self.experts.iter().map(|e| e.min_history()).max().unwrap_or(1)
    }

    fn to_document(&self) -> ModelDocument {
        let experts: Vec<serde_json::Value> = self
            .experts
            .iter()
            .map(|e| serde_json::to_value(e.to_document()).expect("document serializes"))
            .collect();
        let mut doc = ModelDocument::new("otb-mixture", serde_json::json!({ "experts": experts }));
        doc.tensors.insert("weights".into(), self.weights.clone());
        doc
    }
}

/// Batch forecaster from a completed online pass: the experts mixed by the
/// `q`-weighted average of the per-round ensemble weights, with `q` the
/// suffix window chosen by [`select_window`].
pub fn online_to_batch(
    state: &EnsembleState,
    experts: Vec<Box<dyn Forecaster>>,
    config: &OtbConfig,
) -> Result<(MixtureForecaster, OtbSelection), OnlineError> {
    if experts.len() != state.n_experts() {
        return Err(OnlineError::ExpertCount {
            expected: state.n_experts(),
            got: experts.len(),
        });
    }
    let selection = select_window(state, config)?;
    let mixture = MixtureForecaster::new(experts, selection.expert_weights.clone())?;
    Ok((mixture, selection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Martingale;
    use crate::online::{EnsembleConfig, LossKind};

    #[test]
    fn candidates() {
        assert_eq!(candidate_windows(1000), vec![1000, 500, 250, 125]);
        assert_eq!(candidate_windows(3), vec![3, 1]);
        assert_eq!(candidate_windows(1), vec![1]);
    }

    #[test]
    fn empty_state_is_an_error() {
        let state = EnsembleState::new(vec!["m".into()], EnsembleConfig::tuned(1, 10, 1.0, LossKind::Squared)).unwrap();
        assert_eq!(select_window(&state, &OtbConfig::default()).unwrap_err(), OnlineError::EmptyState);
    }

    #[test]
    fn single_expert_is_identity() {
        let mut state = EnsembleState::new(vec!["martingale".into()], EnsembleConfig::tuned(1, 64, 1.0, LossKind::Squared)).unwrap();
        let values: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() + 10.0).collect();
        for t in 16..80 {
            state.step(&[values[t - 1]], values[t]).unwrap();
        }
        let (mixture, sel) = online_to_batch(&state, vec![Box::new(Martingale)], &OtbConfig::default()).unwrap();
        assert_eq!(sel.expert_weights, vec![1.0]);
        for t in 1..80 {
            assert_eq!(mixture.predict_next(&values[..t]).unwrap(), values[t - 1]);
        }
    }

    #[test]
    fn objective_is_minimized() {
        let mut state = EnsembleState::new(vec!["a".into(), "b".into()], EnsembleConfig::tuned(2, 2000, 4.0, LossKind::Absolute)).unwrap();
        for t in 0..2000 {
            let shift = if t < 1000 { 0.0 } else { 2.0 };
            state.step(&[0.0, 1.0], shift + 0.1 * (t % 3) as f64).unwrap();
        }
        let sel = select_window(&state, &OtbConfig::default()).unwrap();
        let min = sel.scores.iter().map(|s| s.objective).fold(f64::INFINITY, f64::min);
        let chosen = sel.scores.iter().find(|s| s.window == sel.window).unwrap();
        assert_eq!(chosen.objective, min);
        assert!((sel.expert_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sel.window <= 1000);
    }
}
