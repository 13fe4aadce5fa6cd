use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, Utc};
use thiserror::Error;

use super::{parse_alphavantage_daily, DataSourceConfig, IngestError};
use crate::series::PriceSeries;

pub const ALPHAVANTAGE_URL: &str = "https://www.alphavantage.co/query";
pub const API_KEY_ENV: &str = "ALPHAVANTAGE_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// One blocking HTTP GET returning the response body.
pub trait Transport {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, TransportError> {
        let mut request = ureq::get(url);
        for (k, v) in query {
            request = request.query(*k, *v);
        }
        let mut response = request.call().map_err(|e| TransportError(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))
    }
}

/// `<cache_dir>/<SYMBOL>_<YYYY-MM-DD>.json`, keyed by the UTC fetch date.
pub fn cache_path(config: &DataSourceConfig, day: NaiveDate) -> PathBuf {
    config
        .cache_dir
        .join(format!("{}_{}.json", config.symbol, day.format("%Y-%m-%d")))
}

pub fn fetch_daily<T: Transport>(config: &DataSourceConfig, transport: &T) -> Result<(PriceSeries, PathBuf), IngestError> {
    fetch_daily_on(config, transport, Utc::now().date_naive())
}

/// Returns the cached series for `(symbol, day)` if present; otherwise issues a
/// single GET, validates the body, caches it verbatim and returns it.
/// Throttle notices and unparseable bodies are never cached.
pub fn fetch_daily_on<T: Transport>(
    config: &DataSourceConfig,
    transport: &T,
    day: NaiveDate,
) -> Result<(PriceSeries, PathBuf), IngestError> {
    let path = cache_path(config, day);
    if path.exists() {
        let body = std::fs::read_to_string(&path).map_err(|e| IngestError::io(&path, e))?;
        log::debug!("cache hit {}", path.display());
        return Ok((parse_alphavantage_daily(&body)?, path));
    }
    let key = config
        .api_key
        .as_deref()
        .ok_or_else(|| IngestError::Config(format!("{API_KEY_ENV} is not set and no cache entry exists")))?;
    let body = transport.get(
        ALPHAVANTAGE_URL,
        &[
            ("function", "TIME_SERIES_DAILY"),
            ("symbol", &config.symbol),
            ("outputsize", "full"),
            ("apikey", key),
        ],
    )?;
    let series = parse_alphavantage_daily(&body)?;
    std::fs::create_dir_all(&config.cache_dir).map_err(|e| IngestError::io(&config.cache_dir, e))?;
    atomic_write(&path, body.as_bytes())?;
    Ok((series, path))
}

/// Writes through a temporary file in the target directory, then renames,
/// so readers never observe a partial file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<(), IngestError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IngestError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| IngestError::io(path, e))?;
    tmp.persist(path).map_err(|e| IngestError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    struct Stub {
        body: Result<String, TransportError>,
        calls: Cell<usize>,
    }

    impl Stub {
        fn new(body: Result<String, TransportError>) -> Self {
            Self { body, calls: Cell::new(0) }
        }
    }

    impl Transport for Stub {
        fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, TransportError> {
            assert_eq!(url, ALPHAVANTAGE_URL);
            assert!(query.contains(&("function", "TIME_SERIES_DAILY")));
            assert!(query.contains(&("outputsize", "full")));
            self.calls.set(self.calls.get() + 1);
            self.body.clone()
        }
    }

    const DOC: &str = r#"{"Meta Data": {"2. Symbol": "SPY"}, "Time Series (Daily)": {
        "2020-01-02": {"1. open": "1", "2. high": "2", "3. low": "0.5", "4. close": "1.5", "5. volume": "10"}}}"#;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 5, 6).unwrap()
    }

    #[test]
    fn fetches_once_then_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let config = DataSourceConfig::new("SPY", dir.path(), Some("k".into())).unwrap();
        let stub = Stub::new(Ok(DOC.into()));
        let (first, path) = fetch_daily_on(&config, &stub, day()).unwrap();
        assert_eq!(first, parse_alphavantage_daily(DOC).unwrap());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), DOC);
        let (second, _) = fetch_daily_on(&config, &stub, day()).unwrap();
        assert_eq!(first, second);
        assert_eq!(stub.calls.get(), 1);
    }

    #[test]
    fn cache_hit_needs_no_key_or_network() {
        let dir = tempfile::tempdir().unwrap();
        let config = DataSourceConfig::new("SPY", dir.path(), None).unwrap();
        std::fs::write(cache_path(&config, day()), DOC).unwrap();
        let stub = Stub::new(Err(TransportError("offline".into())));
        assert!(fetch_daily_on(&config, &stub, day()).is_ok());
        assert_eq!(stub.calls.get(), 0);
    }

    #[test]
    fn throttle_is_distinct_and_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let config = DataSourceConfig::new("SPY", dir.path(), Some("k".into())).unwrap();
        let stub = Stub::new(Ok(
            r#"{"Note": "Thank you for using Alpha Vantage! Our standard API call frequency is 5 calls per minute and 500 calls per day."}"#.into(),
        ));
        assert!(matches!(fetch_daily_on(&config, &stub, day()), Err(IngestError::Throttled(_))));
        assert!(!cache_path(&config, day()).exists());
    }

    #[test]
    fn transport_failure_without_cache() {
        let dir = tempfile::tempdir().unwrap();
        let config = DataSourceConfig::new("SPY", dir.path(), Some("k".into())).unwrap();
        let stub = Stub::new(Err(TransportError("connection refused".into())));
        assert!(matches!(fetch_daily_on(&config, &stub, day()), Err(IngestError::Transport(_))));
    }
}
