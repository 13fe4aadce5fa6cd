use tsbench_core::backtest::{run_mean_reversion, OptionContract, StrategyConfig};
use tsbench_core::models::{Martingale, ModelDocument, ModelError};
use tsbench_core::{generate, Forecaster, GeneratorSpec};

#[test]
fn straddle_identity_on_spot_sweep() {
    // dyadic spots, strike and premium keep every intermediate exact
    let (k, p) = (100.0, 3.0);
    let call = OptionContract::call(k, p).unwrap();
    let put = OptionContract::put(k, p).unwrap();
    for i in 0..=200 {
        let spot = 75.0 + 0.25 * i as f64;
        let straddle = call.payoff(spot) + put.payoff(spot);
        assert_eq!(straddle, (spot - k).abs() - 2.0 * p, "spot {spot}");
    }
}

#[test]
fn payoff_is_convex_with_kink_at_strike() {
    for c in [OptionContract::call(50.0, 1.5).unwrap(), OptionContract::put(50.0, 1.5).unwrap()] {
        for i in 1..200 {
            let s = 25.0 + 0.25 * i as f64;
            let second = c.payoff(s - 0.25) - 2.0 * c.payoff(s) + c.payoff(s + 0.25);
            if s == 50.0 {
                assert_eq!(second, 0.25);
            } else {
                assert_eq!(second, 0.0, "spot {s}");
            }
        }
    }
}

/// Expects full reversion to the recent mean, so it always agrees with the
/// strategy's entry signal.
struct RollingMean(usize);

impl Forecaster for RollingMean {
    fn name(&self) -> String {
        "rolling-mean".into()
    }
    fn fit(&mut self, _: &[f64]) -> Result<(), ModelError> {
        Ok(())
    }
    fn predict_next(&self, h: &[f64]) -> Result<f64, ModelError> {
        let tail = &h[h.len() - self.0..];
        Ok(tail.iter().sum::<f64>() / self.0 as f64)
    }
    fn min_history(&self) -> usize {
        self.0
    }
    fn to_document(&self) -> ModelDocument {
        Martingale.to_document()
    }
}

fn pnl_over_walks(forecaster: &dyn Forecaster) -> (f64, f64, usize) {
    let config = StrategyConfig {
        lookback: 10,
        threshold: 0.01,
        position_size: 10,
        initial_cash: 1e6,
        fee: 0.0,
    };
    let mut pnls = Vec::new();
    let mut trades = 0;
    for seed in 0..200 {
        let walk = generate(&GeneratorSpec::martingale(0.01, 100.0, 250, seed)).unwrap();
        let prices = walk.series.to_price_series("SIM").unwrap();
        let ledger = run_mean_reversion(&prices, &config, forecaster).unwrap();
        assert_eq!(ledger.replay(), ledger.cash);
        assert!(ledger.skipped.is_empty());
        trades += ledger.trades.len();
        pnls.push(ledger.final_pnl);
    }
    let n = pnls.len() as f64;
    let mean = pnls.iter().sum::<f64>() / n;
    let var = pnls.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt(), trades)
}

#[test]
fn martingale_walks_have_zero_expected_pnl() {
    let (mean, se, trades) = pnl_over_walks(&RollingMean(5));
    assert!(trades > 200, "strategy barely traded ({trades} fills)");
    assert!(mean.abs() <= 3.0 * se, "mean P&L {mean} outside 3·SE = {}", 3.0 * se);
}

#[test]
fn martingale_forecaster_never_confirms_an_entry() {
    let (mean, se, trades) = pnl_over_walks(&Martingale);
    assert_eq!((mean, se, trades), (0.0, 0.0, 0));
}
