use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::IngestError;
use crate::series::{Bar, OhlcPolicy, PriceSeries};

pub const CSV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

/// Reads `date,open,high,low,close,volume`. The symbol is the file stem.
pub fn read_csv(path: &Path) -> Result<PriceSeries, IngestError> {
    read_csv_with(path, OhlcPolicy::default())
}

pub fn read_csv_with(path: &Path, policy: OhlcPolicy) -> Result<PriceSeries, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(file, &symbol, policy)
}

pub fn parse_csv<R: Read>(reader: R, symbol: &str, policy: OhlcPolicy) -> Result<PriceSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(IngestError::Csv { line: 1, message: "missing header".into() }),
        Some(r) => r.map_err(|e| csv_error(1, e))?,
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(IngestError::Csv {
            line: 1,
            message: format!("header must be '{}'", CSV_HEADER.join(",")),
        });
    }

    let mut bars: Vec<Bar> = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(0, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(IngestError::Csv {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| IngestError::Csv {
            line,
            message: format!("bad date '{}': {e}", &record[0]),
        })?;
        let mut prices = [0.0; 4];
        for (k, slot) in prices.iter_mut().enumerate() {
            let raw = &record[k + 1];
            let value: f64 = raw.parse().map_err(|_| IngestError::Csv {
                line,
                message: format!("unparseable {} '{raw}'", CSV_HEADER[k + 1]),
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(IngestError::Csv {
                    line,
                    message: format!("{} must be a positive price, got {raw}", CSV_HEADER[k + 1]),
                });
            }
            *slot = value;
        }
        let volume: u64 = record[5].parse().map_err(|_| IngestError::Csv {
            line,
            message: format!("unparseable volume '{}'", &record[5]),
        })?;
        if let Some(prev) = bars.last() {
            if date <= prev.date {
                return Err(IngestError::Csv {
                    line,
                    message: format!("date {date} does not follow {}", prev.date),
                });
            }
        }
        bars.push(Bar {
            date,
            open: prices[0],
            high: prices[1],
            low: prices[2],
            close: prices[3],
            volume,
        });
    }
    if bars.is_empty() {
        return Err(IngestError::EmptyData);
    }
    Ok(PriceSeries::with_policy(symbol, bars, policy)?)
}

fn csv_error(line: u64, err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(line);
    IngestError::Csv {
        line,
        message: err.to_string(),
    }
}

/// Shortest round-trip float formatting, so read ∘ write is the identity.
pub fn write_csv_to<W: Write>(series: &PriceSeries, writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for b in series.bars() {
        wtr.write_record([
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_csv(series: &PriceSeries, path: &Path) -> Result<(), IngestError> {
    let mut buf = Vec::new();
    write_csv_to(series, &mut buf).map_err(|e| IngestError::format(None, e.to_string()))?;
    super::fetch::atomic_write(path, &buf)
}
