//! Daily price bars, derived value series, and the close/open transforms.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series is empty")]
    Empty,
    #[error("dates not strictly increasing at index {index} ({date})")]
    UnorderedDates { index: usize, date: NaiveDate },
    #[error("malformed bar at {date}: {reason}")]
    MalformedBar { date: NaiveDate, reason: String },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dates and values differ in length ({dates} vs {values})")]
    LengthMismatch { dates: usize, values: usize },
}

/// One trading day of OHLCV data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
}

impl Bar {
    /// True when `low <= min(open, close)` and `high >= max(open, close)`.
    pub fn ohlc_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

/// How to treat bars whose high/low do not bracket open and close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OhlcPolicy {
    /// Log a warning and keep the bar.
    #[default]
    Warn,
    /// Reject the series.
    Strict,
}

/// Date-indexed daily bars for one symbol.
///
/// Dates are strictly increasing (calendar gaps are fine) and every price is
/// strictly positive. Construction validates both; there is no way to obtain
/// a `PriceSeries` that violates them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    symbol: String,
    bars: Vec<Bar>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<Bar>) -> Result<Self, SeriesError> {
        Self::with_policy(symbol, bars, OhlcPolicy::default())
    }

    pub fn with_policy(
        symbol: impl Into<String>,
        bars: Vec<Bar>,
        policy: OhlcPolicy,
    ) -> Result<Self, SeriesError> {
        let symbol = symbol.into();
        if bars.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (index, bar) in bars.iter().enumerate() {
            if index > 0 && bar.date <= bars[index - 1].date {
                return Err(SeriesError::UnorderedDates {
                    index,
                    date: bar.date,
                });
            }
            for (field, price) in [
                ("open", bar.open),
                ("high", bar.high),
                ("low", bar.low),
                ("close", bar.close),
            ] {
                if !(price.is_finite() && price > 0.0) {
                    return Err(SeriesError::MalformedBar {
                        date: bar.date,
                        reason: format!("{field} price {price} is not strictly positive"),
                    });
                }
            }
            if !bar.ohlc_consistent() {
                match policy {
                    OhlcPolicy::Warn => log::warn!(
                        "{symbol} {}: high/low do not bracket open/close, keeping bar",
                        bar.date
                    ),
                    OhlcPolicy::Strict => {
                        return Err(SeriesError::MalformedBar {
                            date: bar.date,
                            reason: "high/low do not bracket open/close".into(),
                        })
                    }
                }
            }
        }
        Ok(Self { symbol, bars })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    /// Sub-series over a bar index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self, SeriesError> {
        Self::new(self.symbol.clone(), self.bars[range].to_vec())
    }
}

/// Real-valued series keyed by date: raw closes or a transform of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ValueSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self, SeriesError> {
        if dates.len() != values.len() {
            return Err(SeriesError::LengthMismatch {
                dates: dates.len(),
                values: values.len(),
            });
        }
        for index in 1..dates.len() {
            if dates[index] <= dates[index - 1] {
                return Err(SeriesError::UnorderedDates {
                    index,
                    date: dates[index],
                });
            }
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite { index });
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        }
    }

    /// Synthetic bars whose open is the previous value and whose close is the
    /// current one, so `close / open` is the one-step ratio of the walk.
    pub fn to_price_series(&self, symbol: &str) -> Result<PriceSeries, SeriesError> {
        let bars = self
            .dates
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (&date, &close))| {
                let open = if i == 0 { close } else { self.values[i - 1] };
                Bar {
                    date,
                    open,
                    high: open.max(close),
                    low: open.min(close),
                    close,
                    volume: 0,
                }
            })
            .collect();
        PriceSeries::new(symbol, bars)
    }
}

/// Which quantity of each bar becomes the modelled value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Raw close.
    #[default]
    Close,
    /// close / open
    Divide,
    /// close - open
    Subtract,
    /// ln(close)
    Log,
}

impl Transform {
    pub fn apply(self, series: &PriceSeries) -> ValueSeries {
        match self {
            Transform::Close => map_bars(series, |b| b.close),
            Transform::Divide => transform_divide(series),
            Transform::Subtract => transform_subtract(series),
            Transform::Log => map_bars(series, |b| b.close.ln()),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transform::Close => "close",
            Transform::Divide => "divide",
            Transform::Subtract => "subtract",
            Transform::Log => "log",
        }
    }
}

fn map_bars(series: &PriceSeries, f: impl Fn(&Bar) -> f64) -> ValueSeries {
    // PriceSeries already guarantees ordered dates and positive finite prices,
    // so every transform here is finite.
    ValueSeries {
        dates: series.dates(),
        values: series.bars().iter().map(f).collect(),
    }
}

/// Per-bar `close / open`. Opens are strictly positive by construction of
/// [`PriceSeries`], so the ratio is always defined.
pub fn transform_divide(series: &PriceSeries) -> ValueSeries {
    map_bars(series, |b| b.close / b.open)
}

/// Per-bar `close - open`.
pub fn transform_subtract(series: &PriceSeries) -> ValueSeries {
    map_bars(series, |b| b.close - b.open)
}
