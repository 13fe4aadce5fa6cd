use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::BacktestError;
use crate::models::Forecaster;
use crate::series::PriceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    /// Days in the rolling mean of closes.
    pub lookback: usize,
    /// Entry band as a fraction of the rolling mean.
    pub threshold: f64,
    /// Shares per trade.
    pub position_size: u64,
    pub initial_cash: f64,
    /// Flat fee per fill.
    #[serde(default)]
    pub fee: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            lookback: 20,
            threshold: 0.02,
            position_size: 1,
            initial_cash: 10_000.0,
            fee: 0.0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.lookback < 2 {
            return Err(BacktestError::Config(format!("lookback {} must be >= 2", self.lookback)));
        }
        if !(self.threshold > 0.0) {
            return Err(BacktestError::Config(format!("threshold {} must be > 0", self.threshold)));
        }
        if self.position_size == 0 {
            return Err(BacktestError::Config("position_size must be >= 1".into()));
        }
        if !(self.initial_cash.is_finite() && self.initial_cash >= 0.0) {
            return Err(BacktestError::Config(format!(
                "initial_cash {} must be finite and >= 0",
                self.initial_cash
            )));
        }
        if !(self.fee.is_finite() && self.fee >= 0.0) {
            return Err(BacktestError::Config(format!("fee {} must be finite and >= 0", self.fee)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Buy,
    Sell,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    /// Bar whose open filled the order.
    pub bar: usize,
    pub date: NaiveDate,
    pub action: Action,
    pub quantity: u64,
    pub price: f64,
    pub fee: f64,
    /// Cash after the fill.
    pub cash: f64,
    /// True for the liquidation at the final bar.
    pub forced: bool,
}

impl Trade {
    fn cash_delta(&self) -> f64 {
        let notional = self.quantity as f64 * self.price;
        match self.action {
            Action::Buy => -notional - self.fee,
            Action::Sell => notional - self.fee,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrade {
    pub bar: usize,
    pub date: NaiveDate,
    pub action: Action,
    pub required: f64,
    pub available: f64,
}

/// Fills, per-bar cash and the resulting P&L of one backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub initial_cash: f64,
    pub trades: Vec<Trade>,
    /// Cash at the end of each bar.
    pub cash: Vec<f64>,
    /// Shares held at the end of each bar.
    pub position: Vec<u64>,
    pub skipped: Vec<SkippedTrade>,
    pub final_pnl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub trades: usize,
    pub skipped: usize,
    pub initial_cash: f64,
    pub final_cash: f64,
    pub final_pnl: f64,
}

impl Ledger {
    /// Cash trajectory recomputed from the trade list alone.
    pub fn replay(&self) -> Vec<f64> {
        let mut cash = self.initial_cash;
        let mut trades = self.trades.iter().peekable();
        (0..self.cash.len())
            .map(|bar| {
                while let Some(t) = trades.next_if(|t| t.bar == bar) {
                    cash += t.cash_delta();
                }
                cash
            })
            .collect()
    }

    pub fn final_cash(&self) -> f64 {
        self.cash.last().copied().unwrap_or(self.initial_cash)
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            trades: self.trades.len(),
            skipped: self.skipped.len(),
            initial_cash: self.initial_cash,
            final_cash: self.final_cash(),
            final_pnl: self.final_pnl,
        }
    }

    /// `date,action,qty,price,cash`, one row per fill.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,action,qty,price,cash\n");
        for t in &self.trades {
            let _ = writeln!(out, "{},{},{},{},{}", t.date, t.action.label(), t.quantity, t.price, t.cash);
        }
        out
    }
}

/// Trades one lot around a rolling mean of closes, gated by the forecaster.
///
/// On each bar `t >= lookback`, with `m` the mean of the previous `lookback`
/// closes and `p` the forecast of close `t + 1` from closes up to `t`:
/// buy when flat if `close < m·(1 − threshold)` and `p > close`; sell when long
/// if `close > m·(1 + threshold)` and `p < close`. Orders fill at the next
/// bar's open. An open position is liquidated at the final bar's open.
pub fn run_mean_reversion(
    series: &PriceSeries,
    config: &StrategyConfig,
    forecaster: &dyn Forecaster,
) -> Result<Ledger, BacktestError> {
    config.validate()?;
    let bars = series.bars();
    let n = bars.len();
    if n < config.lookback + 2 {
        return Err(BacktestError::TooShort {
            lookback: config.lookback,
            got: n,
        });
    }
    let closes = series.closes();
    let qty = config.position_size;
    let mut cash = config.initial_cash;
    let mut held: u64 = 0;
    let mut pending: Option<Action> = None;
    let mut ledger = Ledger {
        initial_cash: config.initial_cash,
        trades: Vec::new(),
        cash: Vec::with_capacity(n),
        position: Vec::with_capacity(n),
        skipped: Vec::new(),
        final_pnl: 0.0,
    };

    let fill = |bar: usize, action: Action, forced: bool, cash: &mut f64, held: &mut u64, ledger: &mut Ledger| {
        let price = bars[bar].open;
        let trade = Trade {
            bar,
            date: bars[bar].date,
            action,
            quantity: qty,
            price,
            fee: config.fee,
            cash: 0.0,
            forced,
        };
        let after = *cash + trade.cash_delta();
        if after < 0.0 {
            ledger.skipped.push(SkippedTrade {
                bar,
                date: bars[bar].date,
                action,
                required: -trade.cash_delta(),
                available: *cash,
            });
            return;
        }
        *cash = after;
        match action {
            Action::Buy => *held += qty,
            Action::Sell => *held -= qty,
        }
        ledger.trades.push(Trade { cash: after, ..trade });
    };

    for t in 0..n {
        if let Some(action) = pending.take() {
            fill(t, action, false, &mut cash, &mut held, &mut ledger);
        }
        if t == n - 1 {
            if held > 0 {
                fill(t, Action::Sell, true, &mut cash, &mut held, &mut ledger);
            }
        } else if t >= config.lookback && t + 1 >= forecaster.min_history() {
            let close = closes[t];
            let mean = closes[t - config.lookback..t].iter().sum::<f64>() / config.lookback as f64;
            let below = close < mean * (1.0 - config.threshold);
            let above = close > mean * (1.0 + config.threshold);
            // entries need a later bar to exit on
            let can_enter = held == 0 && t + 2 < n;
            if (below && can_enter) || (above && held > 0) {
                let forecast = forecaster.predict_next(&closes[..=t]).map_err(|source| BacktestError::Model {
                    model: forecaster.name(),
                    index: t,
                    source,
                })?;
                if below && can_enter && forecast > close {
                    pending = Some(Action::Buy);
                } else if above && held > 0 && forecast < close {
                    pending = Some(Action::Sell);
                }
            }
        }
        ledger.cash.push(cash);
        ledger.position.push(held);
    }
    ledger.final_pnl = cash - config.initial_cash;
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Martingale, ModelDocument, ModelError};
    use crate::series::Bar;

    /// Predicts the mean of the last `k` values, so it always expects reversion.
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
            ModelDocument::new("rolling-mean", serde_json::Value::Null)
        }
    }

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &close)| {
                let open = if i == 0 { close } else { closes[i - 1] };
                Bar {
                    date: start + chrono::Days::new(i as u64),
                    open,
                    high: open.max(close),
                    low: open.min(close),
                    close,
                    volume: 0,
                }
            })
            .collect();
        PriceSeries::new("V", bars).unwrap()
    }

    const V: [f64; 10] = [10.0, 9.0, 8.0, 7.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0];

    fn v_config() -> StrategyConfig {
        StrategyConfig {
            lookback: 3,
            threshold: 0.05,
            position_size: 1,
            initial_cash: 100.0,
            fee: 0.0,
        }
    }

    #[test]
    fn constant_prices_never_trade() {
        let ledger = run_mean_reversion(&series(&[50.0; 30]), &v_config(), &Martingale).unwrap();
        assert!(ledger.trades.is_empty());
        assert_eq!(ledger.final_pnl, 0.0);
    }

    #[test]
    fn v_fixture_with_martingale() {
        // hand replay: the entry at bar 3 (close 7 below 0.95·9) needs a
        // forecast above 7, and the martingale forecasts exactly 7, so no
        // order is ever placed
        let ledger = run_mean_reversion(&series(&V), &v_config(), &Martingale).unwrap();
        assert!(ledger.trades.is_empty());
        assert_eq!(ledger.final_pnl, 0.0);
        assert_eq!(ledger.cash, vec![100.0; 10]);
    }

    #[test]
    fn v_fixture_with_reverting_forecaster() {
        // hand replay:
        //   t=3: mean(10,9,8)=9, close 7 < 8.55, forecast mean(9,8,7)=8 > 7 → buy at open[4]=7
        //   t=6: mean(7,6,7)=6.67, close 8 > 7.0, forecast mean(6,7,8)=7 < 8 → sell at open[7]=8
        //   t=7,8: no signal; flat at the end
        let ledger = run_mean_reversion(&series(&V), &v_config(), &RollingMean(3)).unwrap();
        let fills: Vec<(usize, Action, f64)> = ledger.trades.iter().map(|t| (t.bar, t.action, t.price)).collect();
        assert_eq!(fills, vec![(4, Action::Buy, 7.0), (7, Action::Sell, 8.0)]);
        assert_eq!(ledger.cash, vec![100.0, 100.0, 100.0, 100.0, 93.0, 93.0, 93.0, 101.0, 101.0, 101.0]);
        assert_eq!(ledger.position, vec![0, 0, 0, 0, 1, 1, 1, 0, 0, 0]);
        assert_eq!(ledger.final_pnl, 1.0);
        assert_eq!(ledger.replay(), ledger.cash);
    }

    #[test]
    fn open_position_is_closed_at_the_end() {
        let closes = [10.0, 9.0, 8.0, 7.0, 6.5, 6.0, 5.5];
        let ledger = run_mean_reversion(&series(&closes), &v_config(), &RollingMean(3)).unwrap();
        let last = ledger.trades.last().unwrap();
        assert!(last.forced);
        assert_eq!(last.bar, 6);
        assert_eq!(*ledger.position.last().unwrap(), 0);
        // bought at open[4]=7, sold at open[6]=6
        assert_eq!(ledger.final_pnl, -1.0);
    }

    #[test]
    fn unreachable_threshold_never_trades() {
        let mut config = v_config();
        config.threshold = 1e9;
        assert!(run_mean_reversion(&series(&V), &config, &RollingMean(3)).unwrap().trades.is_empty());
    }

    #[test]
    fn insufficient_cash_skips() {
        let mut config = v_config();
        config.initial_cash = 5.0;
        let ledger = run_mean_reversion(&series(&V), &config, &RollingMean(3)).unwrap();
        assert!(ledger.trades.is_empty());
        // t=3 wants open[4]=7, then t=4 (close 6 < 0.95·8, forecast 7) wants open[5]=6
        let wanted: Vec<(usize, f64)> = ledger.skipped.iter().map(|s| (s.bar, s.required)).collect();
        assert_eq!(wanted, vec![(4, 7.0), (5, 6.0)]);
        assert!(ledger.cash.iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn fees_are_charged_per_fill() {
        let mut config = v_config();
        config.fee = 0.25;
        let ledger = run_mean_reversion(&series(&V), &config, &RollingMean(3)).unwrap();
        assert_eq!(ledger.final_pnl, 0.5);
        assert_eq!(ledger.replay(), ledger.cash);
    }

    #[test]
    fn csv_rows() {
        let ledger = run_mean_reversion(&series(&V), &v_config(), &RollingMean(3)).unwrap();
        assert_eq!(
            ledger.to_csv(),
            "date,action,qty,price,cash\n2021-03-05,buy,1,7,93\n2021-03-08,sell,1,8,101\n"
        );
    }

    #[test]
    fn config_validation() {
        let mut c = v_config();
        c.lookback = 1;
        assert!(c.validate().is_err());
        let mut c = v_config();
        c.threshold = 0.0;
        assert!(c.validate().is_err());
        assert!(matches!(
            run_mean_reversion(&series(&V[..4]), &v_config(), &Martingale),
            Err(BacktestError::TooShort { .. })
        ));
    }
}
