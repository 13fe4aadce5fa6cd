//! Loading daily bars: AlphaVantage `TIME_SERIES_DAILY` JSON, a plain CSV
//! format, and a per-day file cache in front of the HTTP endpoint.

mod alphavantage;
mod csv_io;
mod fetch;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::series::SeriesError;

pub use alphavantage::{parse_alphavantage_daily, parse_alphavantage_daily_with, to_alphavantage_json};
pub use csv_io::{parse_csv, read_csv, read_csv_with, write_csv, write_csv_to, CSV_HEADER};
pub use fetch::{
    atomic_write, cache_path, fetch_daily, fetch_daily_on, HttpTransport, Transport, TransportError,
    ALPHAVANTAGE_URL, API_KEY_ENV,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing key '{0}' in API response")]
    MissingKey(String),
    #[error("format error{}: {message}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Format {
        context: Option<String>,
        message: String,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("no bars in input")]
    EmptyData,
    #[error("API throttled the request: {0}")]
    Throttled(String),
    #[error("API error: {0}")]
    Api(String),
    #[error("transport error: {0}")]
    Transport(#[from] TransportError),
    #[error("invalid data source: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Series(SeriesError),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<Option<String>>, message: impl Into<String>) -> Self {
        Self::Format {
            context: context.into(),
            message: message.into(),
        }
    }
}

impl From<SeriesError> for IngestError {
    fn from(err: SeriesError) -> Self {
        match err {
            SeriesError::Empty => IngestError::EmptyData,
            other => IngestError::Series(other),
        }
    }
}

/// Where and what to fetch. The API key is only ever read from
/// [`API_KEY_ENV`]; it is optional because cache hits never need it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSourceConfig {
    pub api_key: Option<String>,
    pub cache_dir: PathBuf,
    pub symbol: String,
}

impl DataSourceConfig {
    pub fn new(symbol: &str, cache_dir: impl Into<PathBuf>, api_key: Option<String>) -> Result<Self, IngestError> {
        validate_symbol(symbol)?;
        Ok(Self {
            api_key,
            cache_dir: cache_dir.into(),
            symbol: symbol.to_string(),
        })
    }

    pub fn from_env(symbol: &str, cache_dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(symbol, cache_dir, key)
    }
}

pub fn validate_symbol(symbol: &str) -> Result<(), IngestError> {
    let ok = !symbol.is_empty()
        && symbol
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '.');
    if ok {
        Ok(())
    } else {
        Err(IngestError::Config(format!(
            "symbol '{symbol}' must be nonempty uppercase alphanumerics or dots"
        )))
    }
}
