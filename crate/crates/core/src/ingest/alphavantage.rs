use chrono::NaiveDate;
use serde_json::{Map, Value};

use super::IngestError;
use crate::series::{Bar, OhlcPolicy, PriceSeries};

pub(crate) const META_KEY: &str = "Meta Data";
pub(crate) const SERIES_KEY: &str = "Time Series (Daily)";
const SYMBOL_KEY: &str = "2. Symbol";
const FIELDS: [&str; 5] = ["1. open", "2. high", "3. low", "4. close", "5. volume"];

/// Parses a `TIME_SERIES_DAILY` response. Bars come back sorted by date
/// whatever the key order in the document.
pub fn parse_alphavantage_daily(document: &str) -> Result<PriceSeries, IngestError> {
    parse_alphavantage_daily_with(document, OhlcPolicy::default())
}

pub fn parse_alphavantage_daily_with(
    document: &str,
    policy: OhlcPolicy,
) -> Result<PriceSeries, IngestError> {
    let root: Value = serde_json::from_str(document)
        .map_err(|e| IngestError::format(None, format!("invalid JSON: {e}")))?;
    let root = root
        .as_object()
        .ok_or_else(|| IngestError::format(None, "top level is not an object"))?;
    classify_non_data(root)?;

    let meta = root
        .get(META_KEY)
        .and_then(Value::as_object)
        .ok_or_else(|| IngestError::MissingKey(META_KEY.into()))?;
    let symbol = meta
        .get(SYMBOL_KEY)
        .and_then(Value::as_str)
        .ok_or_else(|| IngestError::MissingKey(format!("{META_KEY}.{SYMBOL_KEY}")))?;
    let series = root
        .get(SERIES_KEY)
        .and_then(Value::as_object)
        .ok_or_else(|| IngestError::MissingKey(SERIES_KEY.into()))?;
    if series.is_empty() {
        return Err(IngestError::EmptyData);
    }

    let mut bars = Vec::with_capacity(series.len());
    for (key, entry) in series {
        let date = NaiveDate::parse_from_str(key, "%Y-%m-%d")
            .map_err(|e| IngestError::format(Some(key.clone()), format!("bad date: {e}")))?;
        let entry = entry
            .as_object()
            .ok_or_else(|| IngestError::format(Some(key.clone()), "bar is not an object"))?;
        let mut numbers = [0.0; 5];
        for (slot, field) in numbers.iter_mut().zip(FIELDS) {
            let raw = entry
                .get(field)
                .ok_or_else(|| IngestError::format(Some(key.clone()), format!("missing '{field}'")))?;
            *slot = number(raw)
                .ok_or_else(|| IngestError::format(Some(key.clone()), format!("unparseable '{field}': {raw}")))?;
        }
        if !(numbers[4] >= 0.0 && numbers[4].fract() == 0.0) {
            return Err(IngestError::format(
                Some(key.clone()),
                format!("volume {} is not a nonnegative integer", numbers[4]),
            ));
        }
        bars.push(Bar {
            date,
            open: numbers[0],
            high: numbers[1],
            low: numbers[2],
            close: numbers[3],
            volume: numbers[4] as u64,
        });
    }
    bars.sort_by_key(|b| b.date);
    Ok(PriceSeries::with_policy(symbol, bars, policy)?)
}

fn number(value: &Value) -> Option<f64> {
    match value {
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        Value::Number(n) => n.as_f64(),
        _ => None,
    }
}

/// Throttle notices and error messages replace the data payload entirely.
fn classify_non_data(root: &Map<String, Value>) -> Result<(), IngestError> {
    if root.contains_key(SERIES_KEY) {
        return Ok(());
    }
    if let Some(msg) = root.get("Error Message").and_then(Value::as_str) {
        return Err(IngestError::Api(msg.to_string()));
    }
    for key in ["Note", "Information"] {
        if let Some(msg) = root.get(key).and_then(Value::as_str) {
            let lower = msg.to_lowercase();
            if ["call frequency", "rate limit", "requests per", "calls per"]
                .iter()
                .any(|needle| lower.contains(needle))
            {
                return Err(IngestError::Throttled(msg.to_string()));
            }
            return Err(IngestError::Api(msg.to_string()));
        }
    }
    Ok(())
}

/// Inverse of [`parse_alphavantage_daily`], newest date first like the API.
/// Numbers use the shortest representation that parses back to the same `f64`.
pub fn to_alphavantage_json(series: &PriceSeries) -> String {
    let mut days = Map::new();
    for bar in series.bars().iter().rev() {
        let mut entry = Map::new();
        for (field, value) in FIELDS.iter().zip([bar.open, bar.high, bar.low, bar.close]) {
            entry.insert((*field).into(), Value::String(format!("{value}")));
        }
        entry.insert(FIELDS[4].into(), Value::String(bar.volume.to_string()));
        days.insert(bar.date.format("%Y-%m-%d").to_string(), Value::Object(entry));
    }
    let mut meta = Map::new();
    meta.insert("1. Information".into(), Value::String("Daily Prices (open, high, low, close) and Volumes".into()));
    meta.insert(SYMBOL_KEY.into(), Value::String(series.symbol().into()));
    let last = series.bars().last().expect("nonempty").date;
    meta.insert("3. Last Refreshed".into(), Value::String(last.format("%Y-%m-%d").to_string()));
    meta.insert("4. Output Size".into(), Value::String("Full size".into()));
    meta.insert("5. Time Zone".into(), Value::String("US/Eastern".into()));
    let mut root = Map::new();
    root.insert(META_KEY.into(), Value::Object(meta));
    root.insert(SERIES_KEY.into(), Value::Object(days));
    serde_json::to_string_pretty(&Value::Object(root)).expect("serializable")
}
