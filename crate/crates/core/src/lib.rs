//! Forecasting benchmark for daily stock prices against the martingale
//! baseline: data ingestion, four one-step-ahead forecasters, an online
//! expert ensemble with discrepancy-guided online-to-batch conversion,
//! walk-forward evaluation, and option/mean-reversion backtesting.

pub mod backtest;
pub mod eval;
pub mod generate;
pub mod ingest;
pub mod models;
pub mod online;
pub mod series;

pub use generate::{generate, martingale_drift, GeneratorSpec, Simulation, WalkKind};
pub use models::{Forecaster, ModelError, ModelSpec};
pub use series::{Bar, OhlcPolicy, PriceSeries, Transform, ValueSeries};
