use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::series::Transform;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rmse: f64,
    pub mae: f64,
    pub n_predictions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    #[serde(flatten)]
    pub score: Score,
    /// Model RMSE divided by martingale RMSE.
    pub rmse_ratio: f64,
    /// Model MAE divided by martingale MAE.
    pub mae_ratio: f64,
}

impl ModelScore {
    pub fn new(name: &str, score: Score, martingale: &Score) -> Self {
        Self {
            name: name.to_string(),
            rmse_ratio: ratio(score.rmse, martingale.rmse),
            mae_ratio: ratio(score.mae, martingale.mae),
            score,
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub index: usize,
    /// First and last training dates.
    pub train: (NaiveDate, NaiveDate),
    /// First and last predicted dates.
    pub test: (NaiveDate, NaiveDate),
    pub martingale: Score,
    pub models: Vec<ModelScore>,
}

/// Aggregate scores over every fold, plus the per-fold breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub series: String,
    pub transform: Transform,
    pub split: String,
    pub seed: u64,
    pub notes: Vec<String>,
    pub n_predictions: usize,
    pub martingale: Score,
    pub models: Vec<ModelScore>,
    pub folds: Vec<FoldReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn model(&self, name: &str) -> Option<&ModelScore> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Aligned-column table, one row per model.
    pub fn to_table(&self) -> String {
        let header = [
            "Model",
            "RMSE",
            "RMSE: martingale",
            "mean L1-loss",
            "mean L1-loss: martingale",
            "n",
        ];
        let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
        for m in &self.models {
            rows.push([
                m.name.clone(),
                format!("{:.5}", m.score.rmse),
                format!("{:.5}", self.martingale.rmse),
                format!("{:.5}", m.score.mae),
                format!("{:.5}", self.martingale.mae),
                m.score.n_predictions.to_string(),
            ]);
        }
        let mut widths = [0usize; 6];
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!(
            "series: {}  transform: {}  split: {}\n",
            self.series,
            self.transform.label(),
            self.split
        );
        for (r, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if r == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

/// Pointwise predictions behind a report, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub truths: Vec<f64>,
    pub martingale: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl PredictionTable {
    /// Predictions of the named model; `"martingale"` resolves to the baseline.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if let Some((_, c)) = self.columns.iter().find(|(n, _)| n == name) {
            return Some(c);
        }
        (name == "martingale").then_some(self.martingale.as_slice())
    }

    /// Plot data: `date,truth,martingale,<model>...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,truth,martingale");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push('\n');
        for i in 0..self.truths.len() {
            let _ = write!(out, "{},{},{}", self.dates[i], self.truths[i], self.martingale[i]);
            for (_, c) in &self.columns {
                let _ = write!(out, ",{}", c[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Quotes a CSV field when it holds a separator, quote or newline.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
