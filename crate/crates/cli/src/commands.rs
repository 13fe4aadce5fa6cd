//! Subcommand bodies. Each returns the paths it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tsbench_core::backtest::{run_mean_reversion, Ledger, LedgerSummary};
use tsbench_core::eval::{evaluate as run_evaluation, mae, rmse, EvalContext, ModelScore, NamedModel, Score, SplitSpec};
use tsbench_core::ingest::{fetch_daily, read_csv_with, write_csv_to, DataSourceConfig, Transport};
use tsbench_core::online::{run_ensemble, OtbSelection};
use tsbench_core::{generate, Forecaster, ModelSpec, PriceSeries, Transform, ValueSeries};

use crate::config::{DataSection, EnsembleSection, ExperimentConfig};
use crate::error::CliError;
use crate::output::{replicate_suffix, Outputs};

/// Ratio at or above which a model counts as not beating the martingale.
pub const PARITY_RATIO: f64 = 0.98;

/// Lags 5, 21 and 63 stand for a week, a month and a quarter of trading days.
const CALENDAR_LAGS: [usize; 3] = [5, 21, 63];

/// Loaded input for one replicate.
struct Input {
    label: String,
    prices: Option<PriceSeries>,
    values: ValueSeries,
}

fn load_input<T: Transport>(config: &ExperimentConfig, r: usize, transport: &T) -> Result<Input, CliError> {
    let prices = match &config.data {
        DataSection::Csv {
            path,
            symbol,
            ohlc_policy,
        } => {
            let mut series = read_csv_with(path, *ohlc_policy)?;
            if let Some(symbol) = symbol {
                series = PriceSeries::new(symbol.clone(), series.bars().to_vec())?;
            }
            series
        }
        DataSection::Alphavantage {
            symbol,
            cache_dir,
            ohlc_policy,
        } => {
            let source = DataSourceConfig::from_env(symbol, cache_dir)?;
            let (series, path) = fetch_daily(&source, transport)?;
            log::info!("{symbol}: {} bars from {}", series.len(), path.display());
            PriceSeries::with_policy(series.symbol(), series.bars().to_vec(), *ohlc_policy)?
        }
        DataSection::Generator { .. } => {
            let spec = config.data.generator(config.seed, r).expect("generator source");
            let sim = generate(&spec)?;
            let label = format!("{:?} walk, seed {}", spec.kind, spec.seed).to_lowercase();
            if config.transform == Transform::Close {
                // additive walks may cross zero; raw values need no positive prices
                let prices = sim.series.to_price_series("SIM").ok();
                return Ok(Input {
                    label,
                    prices,
                    values: sim.series,
                });
            }
            let prices = sim.series.to_price_series("SIM")?;
            let values = config.transform.apply(&prices);
            return Ok(Input {
                label,
                prices: Some(prices),
                values,
            });
        }
    };
    Ok(Input {
        label: prices.symbol().to_string(),
        values: config.transform.apply(&prices),
        prices: Some(prices),
    })
}

/// Inputs for every replicate; only generator sources have more than one.
fn load_all<T: Transport + Sync>(config: &ExperimentConfig, transport: &T) -> Result<Vec<Input>, CliError> {
    (0..config.data.replicates())
        .into_par_iter()
        .map(|r| load_input(config, r, transport))
        .collect()
}

pub fn fetch<T: Transport>(
    config: Option<&ExperimentConfig>,
    symbol: Option<&str>,
    cache_dir: Option<&Path>,
    transport: &T,
) -> Result<Vec<PathBuf>, CliError> {
    let (config_symbol, config_cache) = match config.map(|c| &c.data) {
        Some(DataSection::Alphavantage { symbol, cache_dir, .. }) => (Some(symbol.as_str()), Some(cache_dir.clone())),
        _ => (None, None),
    };
    let symbol = symbol
        .or(config_symbol)
        .ok_or_else(|| CliError::Config("fetch needs --symbol or an alphavantage data source".into()))?;
    let cache_dir = cache_dir
        .map(Path::to_path_buf)
        .or(config_cache)
        .unwrap_or_else(|| PathBuf::from(".cache"));
    let source = DataSourceConfig::from_env(symbol, cache_dir)?;
    let (series, path) = fetch_daily(&source, transport)?;
    let dates = series.dates();
    println!(
        "{symbol}: {} rows, {}..{}",
        series.len(),
        dates[0],
        dates[dates.len() - 1]
    );
    println!("{}", path.display());
    Ok(vec![path])
}

pub fn simulate(config: &ExperimentConfig, mut out: Outputs) -> Result<Vec<PathBuf>, CliError> {
    if !matches!(config.data, DataSection::Generator { .. }) {
        return Err(CliError::Config("simulate needs a generator data source".into()));
    }
    let n = config.data.replicates();
    let series: Vec<PriceSeries> = (0..n)
        .into_par_iter()
        .map(|r| {
            let spec = config.data.generator(config.seed, r).expect("generator source");
            let sim = generate(&spec)?;
            if let Some(index) = sim.first_nonpositive {
                return Err(CliError::Data(format!(
                    "replicate {r} reaches a nonpositive price at index {index}; raise `initial` or lower `volatility`"
                )));
            }
            Ok(sim.series.to_price_series("SIM")?)
        })
        .collect::<Result<_, CliError>>()?;
    for (r, s) in series.iter().enumerate() {
        let mut buf = Vec::new();
        write_csv_to(s, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
        out.text(&replicate_suffix(n, r), "csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    print_written(&out, n);
    Ok(out.finish())
}

/// Per-model results across replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub model: String,
    pub replicates: usize,
    /// Replicates whose RMSE ratio is at least [`PARITY_RATIO`].
    pub at_parity: usize,
    pub mean_rmse_ratio: f64,
    pub min_rmse_ratio: f64,
    pub max_rmse_ratio: f64,
    pub rmse_ratios: Vec<f64>,
}

fn summarize(name: &str, ratios: Vec<f64>) -> ReplicateSummary {
    ReplicateSummary {
        model: name.to_string(),
        replicates: ratios.len(),
        at_parity: ratios.iter().filter(|&&r| r >= PARITY_RATIO).count(),
        mean_rmse_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        min_rmse_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_rmse_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rmse_ratios: ratios,
    }
}

fn named_models(config: &ExperimentConfig) -> Vec<NamedModel> {
    config
        .models
        .iter()
        .map(|m| NamedModel {
            name: m.display_name(),
            spec: m.spec.clone(),
        })
        .collect()
}

pub fn evaluate<T: Transport + Sync>(
    config: &ExperimentConfig,
    mut out: Outputs,
    transport: &T,
) -> Result<Vec<PathBuf>, CliError> {
    let models = named_models(config);
    let split = config.split.clone().unwrap_or(SplitSpec::fraction(0.7));
    let inputs = load_all(config, transport)?;
    let n = inputs.len();
    let calendar = config.models.iter().any(|m| {
        matches!(&m.spec, ModelSpec::Linear { lags, .. } if lags.iter().any(|l| CALENDAR_LAGS.contains(l)))
    });
    let evaluations = inputs
        .par_iter()
        .enumerate()
        .map(|(r, input)| {
            let mut ctx = EvalContext::new(&input.label, config.transform, config.seed.wrapping_add(r as u64));
            if calendar {
                ctx.notes
                    .push("lags 5, 21 and 63 are one week, month and quarter of trading days".into());
            }
            run_evaluation(&models, &input.values, &split, &ctx)
        })
        .collect::<Result<Vec<_>, _>>()?;

    for (r, evaluation) in evaluations.iter().enumerate() {
        let sfx = replicate_suffix(n, r);
        out.text(&sfx, "report.json", &evaluation.report.to_json())?;
        out.text(&sfx, "table.txt", &evaluation.report.to_table())?;
        out.text(&sfx, "predictions.csv", &evaluation.table.to_csv())?;
        out.json(&sfx, "models.json", &documents_json(&evaluation.documents))?;
    }
    if n == 1 {
        print!("{}", evaluations[0].report.to_table());
    } else {
        let summaries: Vec<ReplicateSummary> = models
            .iter()
            .map(|m| {
                let ratios = evaluations
                    .iter()
                    .map(|e| e.report.model(&m.name).expect("scored model").rmse_ratio)
                    .collect();
                summarize(&m.name, ratios)
            })
            .collect();
        let text = summary_table(&summaries);
        out.json("", "summary.json", &summaries)?;
        out.text("", "summary.txt", &text)?;
        print!("{text}");
    }
    print_written(&out, n);
    Ok(out.finish())
}

fn documents_json(documents: &[Vec<(String, tsbench_core::models::ModelDocument)>]) -> serde_json::Value {
    serde_json::Value::Array(
        documents
            .iter()
            .enumerate()
            .map(|(fold, docs)| {
                let models: serde_json::Map<String, serde_json::Value> = docs
                    .iter()
                    .map(|(name, doc)| (name.clone(), serde_json::to_value(doc).expect("document serializes")))
                    .collect();
                serde_json::json!({ "fold": fold, "models": models })
            })
            .collect(),
    )
}

fn summary_table(summaries: &[ReplicateSummary]) -> String {
    let width = summaries.iter().map(|s| s.model.len()).max().unwrap_or(5).max(5);
    let mut text = format!(
        "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "Model", "ratio>=0.98", "mean ratio", "min", "max"
    );
    for s in summaries {
        text.push_str(&format!(
            "{:<width$}  {:>11}  {:>10.4}  {:>10.4}  {:>10.4}\n",
            s.model,
            format!("{}/{}", s.at_parity, s.replicates),
            s.mean_rmse_ratio,
            s.min_rmse_ratio,
            s.max_rmse_ratio
        ));
    }
    text
}

/// Everything written for one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub series: String,
    pub transform: Transform,
    pub seed: u64,
    pub experts: Vec<String>,
    pub train_len: usize,
    pub first_round: usize,
    pub rounds: usize,
    pub eta: f64,
    pub loss_max: f64,
    pub regret: f64,
    pub final_weights: Vec<f64>,
    pub selection: OtbSelection,
    pub martingale: Score,
    pub scores: Vec<ModelScore>,
}

fn score_of(predictions: &[f64], truths: &[f64]) -> Result<Score, CliError> {
    Ok(Score {
        rmse: rmse(predictions, truths)?,
        mae: mae(predictions, truths)?,
        n_predictions: truths.len(),
    })
}

pub fn ensemble<T: Transport + Sync>(
    config: &ExperimentConfig,
    mut out: Outputs,
    transport: &T,
) -> Result<Vec<PathBuf>, CliError> {
    if config.models.is_empty() {
        return Err(CliError::Config("ensemble needs at least one [[models]] expert".into()));
    }
    let section = config.ensemble.clone().unwrap_or_default();
    let settings = section.settings();
    let specs: Vec<ModelSpec> = config.models.iter().map(|m| m.spec.clone()).collect();
    let names: Vec<String> = config.models.iter().map(|m| m.display_name()).collect();
    let inputs = load_all(config, transport)?;
    let n = inputs.len();
    let results = inputs
        .par_iter()
        .enumerate()
        .map(|(r, input)| {
            let values = input.values.values();
            let train_len = train_length(&section, values.len())?;
            let seed = config.seed.wrapping_add(r as u64);
            let run = run_ensemble(&specs, values, train_len, seed, &settings)?;
            let report = ensemble_report(config, input, &names, train_len, seed, &run)?;
            let trace = run.state.trace_csv(settings.trace_window);
            let mixture = run.mixture.to_document();
            Ok((report, trace, mixture))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    for (r, (report, trace, mixture)) in results.iter().enumerate() {
        let sfx = replicate_suffix(n, r);
        out.json(&sfx, "ensemble.json", report)?;
        out.text(&sfx, "trace.csv", trace)?;
        out.json(&sfx, "mixture.json", mixture)?;
    }
    if n > 1 {
        let windows: Vec<usize> = results.iter().map(|(rep, _, _)| rep.selection.window).collect();
        let full = results.iter().filter(|(rep, _, _)| rep.selection.window == rep.rounds).count();
        let recent = results
            .iter()
            .filter(|(rep, _, _)| rep.selection.window <= rep.rounds / 2)
            .count();
        let summary = serde_json::json!({
            "replicates": n,
            "selected_windows": windows,
            "full_window": full,
            "half_or_shorter": recent,
        });
        out.json("", "summary.json", &summary)?;
        println!("full window chosen {full}/{n}, window <= half {recent}/{n}");
    } else {
        let rep = &results[0].0;
        println!(
            "window {} of {} rounds, regret {:.6}",
            rep.selection.window, rep.rounds, rep.regret
        );
        for s in &rep.scores {
            println!("{:<24} rmse ratio {:.4}", s.name, s.rmse_ratio);
        }
    }
    print_written(&out, n);
    Ok(out.finish())
}

fn train_length(section: &EnsembleSection, n: usize) -> Result<usize, CliError> {
    let len = (section.train_fraction * n as f64).floor() as usize;
    if len < 2 || len >= n {
        return Err(CliError::Data(format!(
            "series of {n} values leaves no room for a {} training share",
            section.train_fraction
        )));
    }
    Ok(len)
}

fn ensemble_report(
    config: &ExperimentConfig,
    input: &Input,
    names: &[String],
    train_len: usize,
    seed: u64,
    run: &tsbench_core::online::EnsembleRun,
) -> Result<EnsembleReport, CliError> {
    let values = input.values.values();
    let state = &run.state;
    let truths = state.outcomes();
    let baseline: Vec<f64> = (run.first_round..values.len()).map(|t| values[t - 1]).collect();
    let martingale = score_of(&baseline, truths)?;
    let mut scores = Vec::with_capacity(names.len() + 1);
    for (name, predictions) in names.iter().zip(state.expert_predictions()) {
        scores.push(ModelScore::new(name, score_of(predictions, truths)?, &martingale));
    }
    scores.push(ModelScore::new(
        "ensemble",
        score_of(state.predictions(), truths)?,
        &martingale,
    ));
    Ok(EnsembleReport {
        series: input.label.clone(),
        transform: config.transform,
        seed,
        experts: names.to_vec(),
        train_len,
        first_round: run.first_round,
        rounds: state.round(),
        eta: state.config().eta,
        loss_max: state.config().loss_max,
        regret: state.regret(),
        final_weights: state.weights().to_vec(),
        selection: run.selection.clone(),
        martingale,
        scores,
    })
}

/// Backtest result with its summary first, for readers that stop early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub series: String,
    pub forecaster: String,
    pub train_len: usize,
    pub summary: LedgerSummary,
    pub ledger: Ledger,
}

pub fn backtest<T: Transport + Sync>(
    config: &ExperimentConfig,
    mut out: Outputs,
    transport: &T,
) -> Result<Vec<PathBuf>, CliError> {
    let section = config
        .strategy
        .as_ref()
        .ok_or_else(|| CliError::Config("backtest needs a [strategy] table".into()))?;
    let strategy = section.strategy();
    let inputs = load_all(config, transport)?;
    let n = inputs.len();
    let reports = inputs
        .par_iter()
        .enumerate()
        .map(|(r, input)| {
            let prices = input.prices.as_ref().ok_or_else(|| {
                CliError::Data("backtests need positive prices; this walk crosses zero".into())
            })?;
            let closes = prices.closes();
            let train_len = (section.train_fraction * closes.len() as f64).floor() as usize;
            let mut forecaster = section.forecaster.spec.build(Some(config.seed.wrapping_add(r as u64)))?;
            forecaster.fit(&closes[..train_len])?;
            let test = prices.slice(train_len..prices.len())?;
            let ledger = run_mean_reversion(&test, &strategy, forecaster.as_ref())?;
            Ok(BacktestReport {
                series: input.label.clone(),
                forecaster: section.forecaster.display_name(),
                train_len,
                summary: ledger.summary(),
                ledger,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    for (r, report) in reports.iter().enumerate() {
        let sfx = replicate_suffix(n, r);
        out.text(&sfx, "ledger.csv", &report.ledger.to_csv())?;
        out.json(&sfx, "ledger.json", report)?;
    }
    let pnls: Vec<f64> = reports.iter().map(|r| r.summary.final_pnl).collect();
    if n > 1 {
        let mean = pnls.iter().sum::<f64>() / n as f64;
        let var = pnls.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let trades: usize = reports.iter().map(|r| r.summary.trades).sum();
        let summary = serde_json::json!({
            "replicates": n,
            "mean_pnl": mean,
            "standard_error": se,
            "trades": trades,
            "pnls": pnls,
        });
        out.json("", "summary.json", &summary)?;
        println!("mean P&L {mean:.4} ± {se:.4} over {n} replicates, {trades} trades");
    } else {
        let s = &reports[0].summary;
        println!(
            "{} trades, {} skipped, P&L {:.4}",
            s.trades, s.skipped, s.final_pnl
        );
    }
    print_written(&out, n);
    Ok(out.finish())
}

fn print_written(out: &Outputs, replicates: usize) {
    if replicates > 1 {
        println!("wrote {} replicates under {}", replicates, out.dir().display());
    } else {
        println!("wrote {}", out.dir().display());
    }
}
