use serde::{Deserialize, Serialize};

use super::BacktestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionSide {
    Call,
    Put,
}

/// European option held to expiry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionContract {
    side: OptionSide,
    strike: f64,
    premium: f64,
}

impl OptionContract {
    pub fn new(side: OptionSide, strike: f64, premium: f64) -> Result<Self, BacktestError> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(BacktestError::Contract(format!("strike {strike} must be > 0")));
        }
        if !(premium.is_finite() && premium >= 0.0) {
            return Err(BacktestError::Contract(format!("premium {premium} must be >= 0")));
        }
        Ok(Self {
            side,
            strike,
            premium,
        })
    }

    pub fn call(strike: f64, premium: f64) -> Result<Self, BacktestError> {
        Self::new(OptionSide::Call, strike, premium)
    }

    pub fn put(strike: f64, premium: f64) -> Result<Self, BacktestError> {
        Self::new(OptionSide::Put, strike, premium)
    }

    pub fn side(&self) -> OptionSide {
        self.side
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn premium(&self) -> f64 {
        self.premium
    }

    /// Value at expiry net of the premium paid.
    pub fn payoff(&self, spot: f64) -> f64 {
        let intrinsic = match self.side {
            OptionSide::Call => (spot - self.strike).max(0.0),
            OptionSide::Put => (self.strike - spot).max(0.0),
        };
        intrinsic - self.premium
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsic_values() {
        assert_eq!(OptionContract::call(100.0, 0.0).unwrap().payoff(105.0), 5.0);
        assert_eq!(OptionContract::put(100.0, 2.0).unwrap().payoff(100.0), -2.0);
        assert_eq!(OptionContract::put(100.0, 2.0).unwrap().payoff(90.0), 8.0);
    }

    #[test]
    fn piecewise_sweep() {
        let c = OptionContract::call(100.0, 3.0).unwrap();
        for k in 0..=200 {
            let spot = 90.0 + 0.1 * k as f64;
            let expected = if spot > 100.0 { spot - 100.0 - 3.0 } else { -3.0 };
            assert_eq!(c.payoff(spot), expected, "spot {spot}");
        }
    }

    #[test]
    fn rejects_bad_contracts() {
        assert!(OptionContract::call(0.0, 1.0).is_err());
        assert!(OptionContract::put(10.0, -1.0).is_err());
        assert!(OptionContract::put(f64::NAN, 1.0).is_err());
    }
}
