use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Where the first test prediction may start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Lags may reach back into the training window.
    #[default]
    FullHistory,
    /// Every lag must resolve inside the test window, so the first
    /// prediction is delayed by the longest required history.
    TestOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Contiguous prefix of `floor(train_fraction · n)` points, suffix for test.
    Fraction {
        train_fraction: f64,
        #[serde(default)]
        alignment: Alignment,
    },
    /// Train on calendar year y, test on y + 1, for every consecutive pair present.
    Yearly {
        #[serde(default)]
        alignment: Alignment,
    },
    /// Rolling windows of `train_len` points, each tested on the next `step`.
    WalkForward {
        train_len: usize,
        step: usize,
        #[serde(default)]
        alignment: Alignment,
    },
}

impl SplitSpec {
    pub fn fraction(train_fraction: f64) -> Self {
        SplitSpec::Fraction {
            train_fraction,
            alignment: Alignment::FullHistory,
        }
    }

    pub fn alignment(&self) -> Alignment {
        match self {
            SplitSpec::Fraction { alignment, .. }
            | SplitSpec::Yearly { alignment }
            | SplitSpec::WalkForward { alignment, .. } => *alignment,
        }
    }

    pub fn describe(&self) -> String {
        let align = match self.alignment() {
            Alignment::FullHistory => "",
            Alignment::TestOnly => ", test-only lags",
        };
        match self {
            SplitSpec::Fraction { train_fraction, .. } => {
                format!("fraction {train_fraction}{align}")
            }
            SplitSpec::Yearly { .. } => format!("yearly{align}"),
            SplitSpec::WalkForward {
                train_len, step, ..
            } => format!("walk-forward train_len={train_len} step={step}{align}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub train: Range<usize>,
    pub test: Range<usize>,
}

pub fn split(dates: &[NaiveDate], spec: &SplitSpec) -> Result<Vec<Fold>, EvalError> {
    let n = dates.len();
    match *spec {
        SplitSpec::Fraction { train_fraction, .. } => {
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(EvalError::Split(format!(
                    "train_fraction {train_fraction} outside (0, 1)"
                )));
            }
            // the epsilon absorbs representation error such as 0.7 · 10 = 6.999…
            let cut = (train_fraction * n as f64 + 1e-9).floor() as usize;
            if cut == 0 || cut >= n {
                return Err(EvalError::TooShort {
                    needed: 2,
                    got: n,
                });
            }
            Ok(vec![Fold {
                index: 0,
                train: 0..cut,
                test: cut..n,
            }])
        }
        SplitSpec::Yearly { .. } => {
            let mut years: Vec<(i32, Range<usize>)> = Vec::new();
            for (i, d) in dates.iter().enumerate() {
                match years.last_mut() {
                    Some((y, r)) if *y == d.year() => r.end = i + 1,
                    _ => years.push((d.year(), i..i + 1)),
                }
            }
            let folds: Vec<Fold> = years
                .windows(2)
                .filter(|w| w[1].0 == w[0].0 + 1)
                .enumerate()
                .map(|(index, w)| Fold {
                    index,
                    train: w[0].1.clone(),
                    test: w[1].1.clone(),
                })
                .collect();
            if folds.is_empty() {
                return Err(EvalError::Split(
                    "yearly split needs two consecutive calendar years".into(),
                ));
            }
            Ok(folds)
        }
        SplitSpec::WalkForward {
            train_len, step, ..
        } => {
            if train_len == 0 || step == 0 {
                return Err(EvalError::Split("train_len and step must be positive".into()));
            }
            if n <= train_len {
                return Err(EvalError::TooShort {
                    needed: train_len + 1,
                    got: n,
                });
            }
            Ok((0..)
                .map(|k| k * step)
                .take_while(|start| start + train_len < n)
                .enumerate()
                .map(|(index, start)| {
                    let test_start = start + train_len;
                    Fold {
                        index,
                        train: start..test_start,
                        test: test_start..(test_start + step).min(n),
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{business_days, synthetic_dates};
    use std::collections::BTreeSet;

    #[test]
    fn fraction_floor() {
        let folds = split(&synthetic_dates(10), &SplitSpec::fraction(0.7)).unwrap();
        assert_eq!(folds, vec![Fold { index: 0, train: 0..7, test: 7..10 }]);
        assert!(split(&synthetic_dates(1), &SplitSpec::fraction(0.7)).is_err());
        assert!(split(&synthetic_dates(10), &SplitSpec::fraction(1.0)).is_err());
    }

    #[test]
    fn yearly_pairs_on_seventeen_year_fixture() {
        // weekdays covering [2000-01-01, 2017-01-01)
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let end = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = business_days(start, 6000)
            .into_iter()
            .take_while(|d| *d < end)
            .collect();
        let folds = split(&dates, &SplitSpec::Yearly { alignment: Alignment::FullHistory }).unwrap();
        // oracle: consecutive pairs among the distinct years present
        let years: BTreeSet<i32> = dates.iter().map(|d| d.year()).collect();
        let oracle = years.iter().filter(|y| years.contains(&(*y + 1))).count();
        assert_eq!(oracle, 16);
        assert_eq!(folds.len(), oracle);
        for f in &folds {
            assert_eq!(f.train.end, f.test.start);
            let ty = dates[f.train.start].year();
            assert!(dates[f.train.clone()].iter().all(|d| d.year() == ty));
            assert!(dates[f.test.clone()].iter().all(|d| d.year() == ty + 1));
        }
    }

    #[test]
    fn yearly_skips_missing_years() {
        let dates = vec![
            NaiveDate::from_ymd_opt(2001, 6, 1).unwrap(),
            NaiveDate::from_ymd_opt(2002, 6, 1).unwrap(),
            NaiveDate::from_ymd_opt(2004, 6, 1).unwrap(),
        ];
        let folds = split(&dates, &SplitSpec::Yearly { alignment: Alignment::FullHistory }).unwrap();
        assert_eq!(folds.len(), 1);
    }

    #[test]
    fn walk_forward_counts() {
        let spec = SplitSpec::WalkForward { train_len: 100, step: 1, alignment: Alignment::FullHistory };
        let folds = split(&synthetic_dates(103), &spec).unwrap();
        assert_eq!(folds.len(), 3);
        assert_eq!(folds[2].train, 2..102);
        assert_eq!(folds[2].test, 102..103);
        let spec = SplitSpec::WalkForward { train_len: 10, step: 4, alignment: Alignment::FullHistory };
        let folds = split(&synthetic_dates(20), &spec).unwrap();
        assert_eq!(folds.iter().map(|f| f.test.clone()).collect::<Vec<_>>(), vec![10..14, 14..18, 18..20]);
        assert!(split(&synthetic_dates(100), &SplitSpec::WalkForward { train_len: 100, step: 1, alignment: Alignment::FullHistory }).is_err());
    }
}
