//! Experiment configuration: one TOML document per experiment.
//!
//! Relative data paths resolve against the config file's directory, so a
//! recipe and its data can move together.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer};
use tsbench_core::backtest::StrategyConfig;
use tsbench_core::eval::SplitSpec;
use tsbench_core::online::{EnsembleSettings, LossKind, OtbConfig};
use tsbench_core::{martingale_drift, GeneratorSpec, ModelSpec, OhlcPolicy, Transform, WalkKind};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Stem of every output file; defaults to the config file's stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Relative to the working directory; `--output-dir` overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub strategy: Option<StrategySection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    Csv {
        path: PathBuf,
        /// Defaults to the file stem.
        #[serde(default)]
        symbol: Option<String>,
        #[serde(default)]
        ohlc_policy: OhlcPolicy,
    },
    Alphavantage {
        symbol: String,
        #[serde(default = "default_cache_dir")]
        cache_dir: PathBuf,
        #[serde(default)]
        ohlc_policy: OhlcPolicy,
    },
    Generator {
        kind: WalkKind,
        /// Defaults to the driftless value: `-volatility²/2` for geometric
        /// walks, 0 for additive ones.
        #[serde(default)]
        drift: Option<f64>,
        volatility: f64,
        #[serde(default = "default_initial")]
        initial: f64,
        length: usize,
        #[serde(default)]
        drift_flip_at: Option<usize>,
        /// Independent series with seeds `seed, seed + 1, ...`.
        #[serde(default = "one")]
        replicates: usize,
    },
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".cache")
}

fn default_initial() -> f64 {
    100.0
}

fn one() -> usize {
    1
}

impl DataSection {
    pub fn replicates(&self) -> usize {
        match self {
            DataSection::Generator { replicates, .. } => *replicates,
            _ => 1,
        }
    }

    /// Generator spec for replicate `r`, if this is a generator source.
    pub fn generator(&self, seed: u64, r: usize) -> Option<GeneratorSpec> {
        match *self {
            DataSection::Generator {
                kind,
                drift,
                volatility,
                initial,
                length,
                drift_flip_at,
                ..
            } => Some(GeneratorSpec {
                kind,
                drift: drift.unwrap_or(match kind {
                    WalkKind::Geometric => martingale_drift(volatility),
                    WalkKind::Additive => 0.0,
                }),
                volatility,
                initial,
                length,
                seed: seed.wrapping_add(r as u64),
                drift_flip_at,
            }),
            _ => None,
        }
    }
}

/// A model specification with an optional display name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub name: Option<String>,
    pub spec: ModelSpec,
}

impl ModelEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec.label())
    }
}

impl<'de> Deserialize<'de> for ModelEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(deserializer)?;
        let name = match table.remove("name") {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => {
                return Err(D::Error::custom(format!(
                    "model name must be a string, found {}",
                    other.type_str()
                )))
            }
        };
        let spec = ModelSpec::deserialize(toml::Value::Table(table)).map_err(D::Error::custom)?;
        Ok(Self { name, spec })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    /// Leading share of the series used to fit the experts.
    #[serde(default = "half")]
    pub train_fraction: f64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub loss_max: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub target_window: Option<usize>,
    #[serde(default)]
    pub trace_window: Option<usize>,
}

impl EnsembleSection {
    pub fn settings(&self) -> EnsembleSettings {
        let defaults = EnsembleSettings::default();
        EnsembleSettings {
            loss: self.loss,
            eta: self.eta,
            loss_max: self.loss_max,
            otb: OtbConfig {
                delta: self.delta.unwrap_or(defaults.otb.delta),
                target_window: self.target_window,
            },
            trace_window: self.trace_window.unwrap_or(defaults.trace_window),
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            train_fraction: half(),
            loss: LossKind::default(),
            eta: None,
            loss_max: None,
            delta: None,
            target_window: None,
            trace_window: None,
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub lookback: usize,
    pub threshold: f64,
    #[serde(default = "one_share")]
    pub position_size: u64,
    #[serde(default = "default_cash")]
    pub initial_cash: f64,
    #[serde(default)]
    pub fee: f64,
    /// Leading share of the series used to fit the forecaster; the backtest
    /// runs on the remainder.
    #[serde(default = "half")]
    pub train_fraction: f64,
    #[serde(default = "default_forecaster")]
    pub forecaster: ModelEntry,
}

fn one_share() -> u64 {
    1
}

fn default_cash() -> f64 {
    10_000.0
}

fn default_forecaster() -> ModelEntry {
    ModelEntry {
        name: None,
        spec: ModelSpec::Martingale,
    }
}

impl StrategySection {
    pub fn strategy(&self) -> StrategyConfig {
        StrategyConfig {
            lookback: self.lookback,
            threshold: self.threshold,
            position_size: self.position_size,
            initial_cash: self.initial_cash,
            fee: self.fee,
        }
    }
}

fn check_fraction(what: &str, f: f64) -> Result<(), CliError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {f} must lie in (0, 1)")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads, validates, and resolves relative data paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config =
            Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), strip(e))))?;
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut config.data {
            DataSection::Csv { path, .. } => *path = resolve(base, path),
            DataSection::Alphavantage { cache_dir, .. } => *cache_dir = resolve(base, cache_dir),
            DataSection::Generator { .. } => {}
        }
        if config.name.is_none() {
            config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(config)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("name '{name}' must be a plain file stem")));
            }
        }
        if let DataSection::Generator { replicates, .. } = self.data {
            if replicates == 0 {
                return Err(CliError::Config("replicates must be >= 1".into()));
            }
            self.data.generator(self.seed, 0).expect("generator").validate()?;
        }
        if let Some(SplitSpec::Fraction { train_fraction, .. }) = &self.split {
            check_fraction("split.train_fraction", *train_fraction)?;
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            m.spec.build(None)?;
            if !names.insert(m.display_name()) {
                return Err(CliError::Config(format!(
                    "duplicate model name '{}'; set `name` to tell them apart",
                    m.display_name()
                )));
            }
            if m.display_name() == "martingale" && m.spec != ModelSpec::Martingale {
                return Err(CliError::Config("the name 'martingale' is reserved for the baseline".into()));
            }
        }
        if let Some(e) = &self.ensemble {
            check_fraction("ensemble.train_fraction", e.train_fraction)?;
        }
        if let Some(s) = &self.strategy {
            check_fraction("strategy.train_fraction", s.train_fraction)?;
            s.strategy().validate()?;
            s.forecaster.spec.build(None)?;
        }
        Ok(())
    }
}

fn strip(e: CliError) -> String {
    match e {
        CliError::Config(m) => m,
        other => other.to_string(),
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
