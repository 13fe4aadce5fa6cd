use tsbench_core::ingest::{parse_alphavantage_daily, read_csv, to_alphavantage_json, write_csv};
use tsbench_core::{generate, GeneratorSpec, PriceSeries};

fn generated(n: usize, seed: u64) -> PriceSeries {
    generate(&GeneratorSpec::martingale(0.02, 100.0, n, seed))
        .unwrap()
        .series
        .to_price_series("SIM")
        .unwrap()
}

#[test]
fn thousand_row_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("SIM.csv");
    let series = generated(1000, 7);
    write_csv(&series, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), 1000);
    assert_eq!(back, series);
    // writing the re-read series reproduces the file byte for byte
    let again = dir.path().join("again").with_extension("csv");
    write_csv(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn json_cache_round_trip() {
    let series = generated(250, 8);
    let back = parse_alphavantage_daily(&to_alphavantage_json(&series)).unwrap();
    assert_eq!(back, series);
}

#[test]
fn csv_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("SIM.csv");
    let series = generated(60, 9);
    write_csv(&series, &path).unwrap();
    let from_csv = read_csv(&path).unwrap();
    let from_json = parse_alphavantage_daily(&to_alphavantage_json(&from_csv)).unwrap();
    assert_eq!(from_csv, from_json);
}
