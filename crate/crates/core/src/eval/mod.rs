//! One-step-ahead evaluation against the martingale baseline.
//!
//! Every model predicts each test point from the true history before it; no
//! prediction is ever fed back. All models, the martingale included, are
//! scored on the same index set.

mod metrics;
mod report;
mod split;

use std::ops::Range;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::models::{Forecaster, Martingale, ModelDocument, ModelError, ModelSpec};
use crate::series::{Transform, ValueSeries};

pub(crate) use report::csv_field;
pub use metrics::{mae, rmse};
pub use report::{EvalReport, FoldReport, ModelScore, PredictionTable, Score, REPORT_VERSION};
pub use split::{split, Alignment, Fold, SplitSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty prediction set")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series too short: need {needed} points, have {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("model '{model}' failed at index {index}: {source}")]
    Model {
        model: String,
        index: usize,
        source: ModelError,
    },
    #[error("model '{model}' failed to fit on fold {fold}: {source}")]
    Fit {
        model: String,
        fold: usize,
        source: ModelError,
    },
    #[error("model '{model}' produced a non-finite prediction at index {index}")]
    NonFinite { model: String, index: usize },
    #[error("prediction index sets differ")]
    IndexMismatch,
    #[error("no column named '{0}'")]
    UnknownModel(String),
}

/// A model specification with the name it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedModel {
    pub name: String,
    pub spec: ModelSpec,
}

impl NamedModel {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            name: spec.label(),
            spec,
        }
    }
}

/// Identity of the evaluated data, echoed into the report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub series: String,
    pub transform: Transform,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl EvalContext {
    pub fn new(series: impl Into<String>, transform: Transform, seed: u64) -> Self {
        Self {
            series: series.into(),
            transform,
            seed,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub table: PredictionTable,
    /// Fitted parameters per fold, in model order.
    pub documents: Vec<Vec<(String, ModelDocument)>>,
}

/// One-step-ahead predictions of each forecaster at every index in `range`,
/// each from `values[..t]`.
pub fn predict_range(
    models: &[(&str, &dyn Forecaster)],
    values: &[f64],
    range: Range<usize>,
) -> Result<Vec<Vec<f64>>, EvalError> {
    models
        .iter()
        .map(|(name, model)| {
            range
                .clone()
                .map(|t| {
                    let p = model
                        .predict_next(&values[..t])
                        .map_err(|source| EvalError::Model {
                            model: (*name).to_string(),
                            index: t,
                            source,
                        })?;
                    if p.is_finite() {
                        Ok(p)
                    } else {
                        Err(EvalError::NonFinite {
                            model: (*name).to_string(),
                            index: t,
                        })
                    }
                })
                .collect()
        })
        .collect()
}

/// First test index at which every model has enough history.
pub fn first_prediction_index(fold: &Fold, min_history: usize, alignment: Alignment) -> usize {
    match alignment {
        Alignment::FullHistory => fold.test.start.max(min_history),
        Alignment::TestOnly => fold.test.start + min_history,
    }
}

struct FoldOutcome {
    fold: Fold,
    indices: Range<usize>,
    martingale: Vec<f64>,
    predictions: Vec<Vec<f64>>,
    documents: Vec<(String, ModelDocument)>,
}

fn run_fold(
    models: &[NamedModel],
    values: &[f64],
    fold: Fold,
    alignment: Alignment,
    seed: u64,
) -> Result<Option<FoldOutcome>, EvalError> {
    let training = &values[fold.train.clone()];
    let mut fitted: Vec<Box<dyn Forecaster>> = Vec::with_capacity(models.len());
    for m in models {
        let mut model = m.spec.build(Some(seed.wrapping_add(fold.index as u64))).map_err(|source| {
            EvalError::Fit {
                model: m.name.clone(),
                fold: fold.index,
                source,
            }
        })?;
        model.fit(training).map_err(|source| EvalError::Fit {
            model: m.name.clone(),
            fold: fold.index,
            source,
        })?;
        fitted.push(model);
    }
    let min_history = fitted.iter().map(|m| m.min_history()).max().unwrap_or(1).max(1);
    let start = first_prediction_index(&fold, min_history, alignment);
    if start >= fold.test.end {
        return Ok(None);
    }
    let indices = start..fold.test.end;
    let martingale = predict_range(&[("martingale", &Martingale)], values, indices.clone())?
        .pop()
        .expect("one model");
    let named: Vec<(&str, &dyn Forecaster)> = models
        .iter()
        .zip(&fitted)
        .map(|(m, f)| (m.name.as_str(), f.as_ref()))
        .collect();
    let predictions = predict_range(&named, values, indices.clone())?;
    let documents = models
        .iter()
        .zip(&fitted)
        .map(|(m, f)| (m.name.clone(), f.to_document()))
        .collect();
    Ok(Some(FoldOutcome {
        fold,
        indices,
        martingale,
        predictions,
        documents,
    }))
}

fn score(predictions: &[f64], truths: &[f64]) -> Result<Score, EvalError> {
    Ok(Score {
        rmse: rmse(predictions, truths)?,
        mae: mae(predictions, truths)?,
        n_predictions: predictions.len(),
    })
}

fn model_scores(
    models: &[NamedModel],
    predictions: &[Vec<f64>],
    truths: &[f64],
    martingale: &Score,
) -> Result<Vec<ModelScore>, EvalError> {
    models
        .iter()
        .zip(predictions)
        .map(|(m, p)| {
            let s = score(p, truths)?;
            Ok(ModelScore::new(&m.name, s, martingale))
        })
        .collect()
}

/// Fits every model on each fold's training window and scores one-step-ahead
/// predictions on its test window. Folds run in parallel; results are merged
/// in fold order, so the report is deterministic.
pub fn evaluate(
    models: &[NamedModel],
    series: &ValueSeries,
    spec: &SplitSpec,
    context: &EvalContext,
) -> Result<Evaluation, EvalError> {
    let values = series.values();
    let dates = series.dates();
    let folds = split(dates, spec)?;
    let alignment = spec.alignment();
    let outcomes: Vec<FoldOutcome> = folds
        .into_par_iter()
        .map(|fold| run_fold(models, values, fold, alignment, context.seed))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }

    let mut table = PredictionTable {
        indices: Vec::new(),
        dates: Vec::new(),
        truths: Vec::new(),
        martingale: Vec::new(),
        columns: models.iter().map(|m| (m.name.clone(), Vec::new())).collect(),
    };
    let mut fold_reports = Vec::with_capacity(outcomes.len());
    let mut documents = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let truths = &values[outcome.indices.clone()];
        let martingale = score(&outcome.martingale, truths)?;
        fold_reports.push(FoldReport {
            index: outcome.fold.index,
            train: date_span(dates, &outcome.fold.train),
            test: date_span(dates, &outcome.indices),
            martingale: martingale.clone(),
            models: model_scores(models, &outcome.predictions, truths, &martingale)?,
        });
        table.indices.extend(outcome.indices.clone());
        table.dates.extend_from_slice(&dates[outcome.indices.clone()]);
        table.truths.extend_from_slice(truths);
        table.martingale.extend_from_slice(&outcome.martingale);
        for ((_, column), p) in table.columns.iter_mut().zip(&outcome.predictions) {
            column.extend_from_slice(p);
        }
        documents.push(outcome.documents);
    }

    let martingale = score(&table.martingale, &table.truths)?;
    let predictions: Vec<Vec<f64>> = table.columns.iter().map(|(_, c)| c.clone()).collect();
    let report = EvalReport {
        format_version: REPORT_VERSION,
        series: context.series.clone(),
        transform: context.transform,
        split: spec.describe(),
        seed: context.seed,
        notes: context.notes.clone(),
        n_predictions: table.truths.len(),
        models: model_scores(models, &predictions, &table.truths, &martingale)?,
        martingale,
        folds: fold_reports,
    };
    Ok(Evaluation {
        report,
        table,
        documents,
    })
}

fn date_span(dates: &[NaiveDate], range: &Range<usize>) -> (NaiveDate, NaiveDate) {
    (dates[range.start], dates[range.end - 1])
}

/// Mean absolute difference between two models' predictions (not against the truth).
pub fn model_delta(
    table_a: &PredictionTable,
    model_a: &str,
    table_b: &PredictionTable,
    model_b: &str,
) -> Result<f64, EvalError> {
    if table_a.indices != table_b.indices {
        return Err(EvalError::IndexMismatch);
    }
    let a = table_a
        .column(model_a)
        .ok_or_else(|| EvalError::UnknownModel(model_a.into()))?;
    let b = table_b
        .column(model_b)
        .ok_or_else(|| EvalError::UnknownModel(model_b.into()))?;
    mae(a, b)
}
