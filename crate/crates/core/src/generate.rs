//! Seeded synthetic random walks used as analytic oracles.
//!
//! A geometric walk with `drift = martingale_drift(volatility)` is a
//! martingale: the one-step ratio is log-normal with mean exactly 1, so the
//! last observed value is the optimal one-step forecast under squared loss.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::ValueSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("volatility must be finite and > 0, got {0}")]
    Volatility(f64),
    #[error("initial value must be finite and > 0, got {0}")]
    Initial(f64),
    #[error("length must be at least 2, got {0}")]
    Length(usize),
    #[error("drift must be finite, got {0}")]
    Drift(f64),
    #[error("regime flip index {flip} outside 1..{length}")]
    Flip { flip: usize, length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkKind {
    /// `v(t+1) = v(t) + drift + volatility * Z`
    Additive,
    /// `v(t+1) = v(t) * exp(drift + volatility * Z)`
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: WalkKind,
    pub drift: f64,
    pub volatility: f64,
    pub initial: f64,
    /// Number of values produced, including `initial`.
    pub length: usize,
    pub seed: u64,
    /// When set, the drift changes sign from this step index onward.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_flip_at: Option<usize>,
}

impl GeneratorSpec {
    pub fn geometric(drift: f64, volatility: f64, initial: f64, length: usize, seed: u64) -> Self {
        Self {
            kind: WalkKind::Geometric,
            drift,
            volatility,
            initial,
            length,
            seed,
            drift_flip_at: None,
        }
    }

    pub fn additive(drift: f64, volatility: f64, initial: f64, length: usize, seed: u64) -> Self {
        Self {
            kind: WalkKind::Additive,
            ..Self::geometric(drift, volatility, initial, length, seed)
        }
    }

    /// Driftless geometric walk: log-drift set so that the mean ratio is 1.
    pub fn martingale(volatility: f64, initial: f64, length: usize, seed: u64) -> Self {
        Self::geometric(martingale_drift(volatility), volatility, initial, length, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.volatility.is_finite() && self.volatility > 0.0) {
            return Err(GeneratorError::Volatility(self.volatility));
        }
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return Err(GeneratorError::Initial(self.initial));
        }
        if self.length < 2 {
            return Err(GeneratorError::Length(self.length));
        }
        if !self.drift.is_finite() {
            return Err(GeneratorError::Drift(self.drift));
        }
        if let Some(flip) = self.drift_flip_at {
            if flip == 0 || flip >= self.length {
                return Err(GeneratorError::Flip {
                    flip,
                    length: self.length,
                });
            }
        }
        Ok(())
    }
}

/// A generated walk. Additive walks can cross zero; that is reported, not clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: ValueSeries,
    pub first_nonpositive: Option<usize>,
}

/// Log-drift `-σ²/2` that makes `exp(μ + σZ)` have mean 1.
pub fn martingale_drift(volatility: f64) -> f64 {
    -0.5 * volatility * volatility
}

pub(crate) const SYNTHETIC_EPOCH: (i32, u32, u32) = (2000, 1, 3);

/// `count` consecutive weekdays starting at `start` (rolled forward if it is a weekend).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut day = start;
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day.succ_opt().expect("date overflow");
    }
    out
}

pub fn synthetic_dates(count: usize) -> Vec<NaiveDate> {
    let (y, m, d) = SYNTHETIC_EPOCH;
    business_days(NaiveDate::from_ymd_opt(y, m, d).unwrap(), count)
}

pub fn generate(spec: &GeneratorSpec) -> Result<Simulation, GeneratorError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.length);
    let mut current = spec.initial;
    values.push(current);
    for step in 1..spec.length {
        let z: f64 = StandardNormal.sample(&mut rng);
        let drift = match spec.drift_flip_at {
            Some(flip) if step >= flip => -spec.drift,
            _ => spec.drift,
        };
        current = match spec.kind {
            WalkKind::Additive => current + drift + spec.volatility * z,
            WalkKind::Geometric => current * (drift + spec.volatility * z).exp(),
        };
        values.push(current);
    }
    let first_nonpositive = values.iter().position(|&v| v <= 0.0);
    if let Some(index) = first_nonpositive {
        log::warn!("additive walk reached a nonpositive value at index {index}");
    }
    let series = ValueSeries::new(synthetic_dates(spec.length), values)
        .expect("generated values are finite and dates ordered");
    Ok(Simulation {
        series,
        first_nonpositive,
    })
}
