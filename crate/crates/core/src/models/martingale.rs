use super::{last_value, Forecaster, ModelDocument, ModelError};

/// The best guess for the next value is the last known one.
pub fn martingale_predict(history: &[f64]) -> Result<f64, ModelError> {
    last_value(history)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Martingale;

impl Forecaster for Martingale {
    fn name(&self) -> String {
        "martingale".into()
    }

    fn fit(&mut self, _training: &[f64]) -> Result<(), ModelError> {
        Ok(())
    }

    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError> {
        martingale_predict(history)
    }

    fn to_document(&self) -> ModelDocument {
        ModelDocument::new("martingale", serde_json::Value::Null)
    }
}
