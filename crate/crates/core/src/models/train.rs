//! Mini-batch training of the LSTM forecaster on sliding windows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{lstm_backward, lstm_forward, LstmParams, Tensor};
use super::{Forecaster, ModelDocument, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
    Mae,
}

impl Loss {
    pub fn value(self, prediction: f64, target: f64) -> f64 {
        let e = prediction - target;
        match self {
            Loss::Mse => e * e,
            Loss::Mae => e.abs(),
        }
    }

    /// d loss / d prediction; the MAE subgradient at zero error is 0.
    pub fn derivative(self, prediction: f64, target: f64) -> f64 {
        let e = prediction - target;
        match self {
            Loss::Mse => 2.0 * e,
            Loss::Mae => {
                if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Window length fed to the network; BPTT runs over the whole window.
    pub sequence_length: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 10,
            epochs: 100,
            learning_rate: 1e-3,
            sequence_length: 30,
            batch_size: 32,
            seed: 0,
            loss: Loss::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("epochs", self.epochs),
            ("sequence_length", self.sequence_length),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Affine map fixed from the training window: `(x − mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
        Self { mean, scale }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.scale + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss of the parameters at the end of this epoch.
    pub loss: f64,
    /// Lowest mean training loss seen so far, including the initialization.
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLstm {
    pub params: LstmParams,
    pub standardizer: Standardizer,
    pub history: Vec<EpochStats>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

fn mean_loss(params: &LstmParams, scaled: &[f64], window: usize, loss: Loss) -> Result<f64, ModelError> {
    let count = scaled.len() - window;
    let mut total = 0.0;
    for k in 0..count {
        let trace = lstm_forward(params, &scaled[k..k + window])?;
        total += loss.value(trace.prediction, scaled[k + window]);
    }
    Ok(total / count as f64)
}

/// Adam over shuffled mini-batches of (window → next value) pairs.
///
/// Returns the parameters with the lowest full-pass training loss observed,
/// counting the initialization as epoch 0.
pub fn train_lstm(training: &[f64], config: &TrainConfig) -> Result<TrainedLstm, ModelError> {
    config.validate()?;
    let window = config.sequence_length;
    if training.len() < window + 2 {
        return Err(ModelError::InsufficientData {
            needed: window + 2,
            got: training.len(),
        });
    }
    if let Some(index) = training.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::Domain {
            index,
            value: training[index],
        });
    }
    let standardizer = Standardizer::fit(training);
    let scaled: Vec<f64> = training.iter().map(|&x| standardizer.forward(x)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = LstmParams::init(config.hidden_size, 1, &mut rng);
    let mut adam = Adam::new(params.as_slice().len());
    let mut order: Vec<usize> = (0..scaled.len() - window).collect();

    let initial = mean_loss(&params, &scaled, window, config.loss)?;
    if !initial.is_finite() {
        return Err(ModelError::TrainingDiverged { epoch: 0 });
    }
    let mut best = params.clone();
    let mut best_loss = initial;
    let mut history = vec![EpochStats {
        epoch: 0,
        loss: initial,
        best_loss,
    }];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = LstmParams::zeros(config.hidden_size, 1);
            for &k in batch {
                let trace = lstm_forward(&params, &scaled[k..k + window])?;
                let (_, g) = lstm_backward(&params, &trace, scaled[k + window], config.loss);
                grad.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            adam.step(params.as_mut_slice(), grad.as_slice(), config.learning_rate);
        }
        let loss = mean_loss(&params, &scaled, window, config.loss)?;
        if !loss.is_finite() || !params.is_finite() {
            return Err(ModelError::TrainingDiverged { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best = params.clone();
        }
        history.push(EpochStats {
            epoch,
            loss,
            best_loss,
        });
    }
    Ok(TrainedLstm {
        params: best,
        standardizer,
        history,
    })
}

/// [`Forecaster`] wrapper: standardize the last `sequence_length` values,
/// run the network, de-standardize.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmForecaster {
    config: TrainConfig,
    trained: Option<TrainedLstm>,
}

impl LstmForecaster {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            trained: None,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trained(&self) -> Option<&TrainedLstm> {
        self.trained.as_ref()
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, ModelError> {
        doc.check("lstm")?;
        let config: TrainConfig = serde_json::from_value(doc.config["train"].clone())
            .map_err(|e| ModelError::Document(e.to_string()))?;
        let standardizer: Standardizer = serde_json::from_value(doc.config["standardizer"].clone())
            .map_err(|e| ModelError::Document(e.to_string()))?;
        let params = LstmParams::from_parts(config.hidden_size, 1, |t| {
            doc.tensors.get(t.name()).cloned()
        })?;
        Ok(Self {
            config,
            trained: Some(TrainedLstm {
                params,
                standardizer,
                history: Vec::new(),
            }),
        })
    }
}

impl Forecaster for LstmForecaster {
    fn name(&self) -> String {
        format!("lstm-{}", self.config.hidden_size)
    }

    fn fit(&mut self, training: &[f64]) -> Result<(), ModelError> {
        self.trained = Some(train_lstm(training, &self.config)?);
        Ok(())
    }

    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError> {
        let trained = self.trained.as_ref().ok_or(ModelError::NotFitted)?;
        let window = self.config.sequence_length;
        if history.is_empty() {
            return Err(ModelError::EmptyHistory);
        }
        if history.len() < window {
            return Err(ModelError::InsufficientData {
                needed: window,
                got: history.len(),
            });
        }
        let inputs: Vec<f64> = history[history.len() - window..]
            .iter()
            .map(|&x| trained.standardizer.forward(x))
            .collect();
        let trace = lstm_forward(&trained.params, &inputs)?;
        Ok(trained.standardizer.inverse(trace.prediction))
    }

    fn min_history(&self) -> usize {
        self.config.sequence_length
    }

    fn to_document(&self) -> ModelDocument {
        let standardizer = self.trained.as_ref().map(|t| t.standardizer);
        let mut doc = ModelDocument::new(
            "lstm",
            serde_json::json!({ "train": self.config, "standardizer": standardizer }),
        );
        if let Some(trained) = &self.trained {
            for tensor in Tensor::ALL {
                doc.tensors
                    .insert(tensor.name().into(), trained.params.tensor(tensor).to_vec());
            }
        }
        doc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorSpec};

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_size: 4,
            epochs: 5,
            sequence_length: 8,
            batch_size: 16,
            seed: 42,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_series_predicts_constant() {
        let config = TrainConfig {
            epochs: 50,
            ..small_config()
        };
        let mut model = LstmForecaster::new(config);
        let series = vec![100.0; 120];
        model.fit(&series).unwrap();
        let pred = model.predict_next(&series).unwrap();
        assert!((pred - 100.0).abs() < 1.0, "prediction {pred}");
    }

    #[test]
    fn training_is_deterministic() {
        let sim = generate(&GeneratorSpec::martingale(0.01, 100.0, 200, 6)).unwrap();
        let a = train_lstm(sim.series.values(), &small_config()).unwrap();
        let b = train_lstm(sim.series.values(), &small_config()).unwrap();
        assert_eq!(a.params.as_slice(), b.params.as_slice());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn best_loss_never_increases() {
        let sim = generate(&GeneratorSpec::martingale(0.02, 50.0, 300, 2)).unwrap();
        let config = TrainConfig {
            epochs: 15,
            learning_rate: 0.01,
            ..small_config()
        };
        let trained = train_lstm(sim.series.values(), &config).unwrap();
        assert_eq!(trained.history.len(), 16);
        assert!(trained
            .history
            .windows(2)
            .all(|w| w[1].best_loss <= w[0].best_loss));
        let last = trained.history.last().unwrap().best_loss;
        assert!(trained.history.iter().all(|h| h.loss >= last));
    }

    #[test]
    fn learns_to_track_a_walk() {
        let sim = generate(&GeneratorSpec::martingale(0.01, 100.0, 600, 12)).unwrap();
        let config = TrainConfig {
            epochs: 30,
            learning_rate: 0.01,
            ..small_config()
        };
        let trained = train_lstm(sim.series.values(), &config).unwrap();
        let first = trained.history[0].loss;
        let best = trained.history.last().unwrap().best_loss;
        assert!(best < 0.5 * first, "initial {first}, best {best}");
    }

    #[test]
    fn rejects_short_training_and_bad_config() {
        assert!(matches!(
            train_lstm(&[1.0; 9], &small_config()),
            Err(ModelError::InsufficientData { .. })
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..small_config()
        };
        assert!(matches!(train_lstm(&[1.0; 50], &bad), Err(ModelError::Config(_))));
    }

    #[test]
    fn document_round_trip() {
        let sim = generate(&GeneratorSpec::martingale(0.01, 100.0, 120, 1)).unwrap();
        let mut model = LstmForecaster::new(small_config());
        model.fit(sim.series.values()).unwrap();
        let json = serde_json::to_string(&model.to_document()).unwrap();
        let doc: ModelDocument = serde_json::from_str(&json).unwrap();
        let back = LstmForecaster::from_document(&doc).unwrap();
        let v = sim.series.values();
        assert_eq!(back.predict_next(v).unwrap(), model.predict_next(v).unwrap());
    }

    #[test]
    fn loss_derivatives() {
        assert_eq!(Loss::Mse.value(3.0, 1.0), 4.0);
        assert_eq!(Loss::Mse.derivative(3.0, 1.0), 4.0);
        assert_eq!(Loss::Mae.value(1.0, 3.0), 2.0);
        assert_eq!(Loss::Mae.derivative(1.0, 3.0), -1.0);
        assert_eq!(Loss::Mae.derivative(2.0, 2.0), 0.0);
    }
}
