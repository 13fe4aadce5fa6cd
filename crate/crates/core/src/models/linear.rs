//! Lagged linear model `x(t) = Σ βᵢ·x(t − lagᵢ) + b`, fitted by least squares
//! through a Householder QR factorization of the lag design matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Forecaster, ModelDocument, ModelError};

/// Strictly increasing positive lags, in trading days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LagSpec(Vec<usize>);

impl LagSpec {
    pub fn new(lags: Vec<usize>) -> Result<Self, ModelError> {
        if lags.is_empty() {
            return Err(ModelError::InvalidLags("lag set is empty".into()));
        }
        if lags[0] == 0 {
            return Err(ModelError::InvalidLags("lags must be >= 1".into()));
        }
        if lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidLags(format!(
                "lags must be strictly increasing: {lags:?}"
            )));
        }
        Ok(Self(lags))
    }

    pub fn single() -> Self {
        Self(vec![1])
    }

    /// 1-4 days, one week, about one month and about one quarter back.
    pub fn calendar_recipe() -> Self {
        Self(vec![1, 2, 3, 4, 5, 21, 63])
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn max_lag(&self) -> usize {
        *self.0.last().expect("nonempty")
    }
}

impl TryFrom<Vec<usize>> for LagSpec {
    type Error = ModelError;
    fn try_from(lags: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(lags)
    }
}

impl From<LagSpec> for Vec<usize> {
    fn from(spec: LagSpec) -> Self {
        spec.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// One coefficient per lag, in lag order.
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, lags: &LagSpec, history: &[f64]) -> Result<f64, ModelError> {
        if self.weights.len() != lags.lags().len() {
            return Err(ModelError::Shape(format!(
                "{} weights for {} lags",
                self.weights.len(),
                lags.lags().len()
            )));
        }
        if history.len() < lags.max_lag() {
            return Err(ModelError::InsufficientData {
                needed: lags.max_lag(),
                got: history.len(),
            });
        }
        let n = history.len();
        // history[n - lag] is x(t - lag) when predicting x(t) with t = n
        Ok(lags
            .lags()
            .iter()
            .zip(&self.weights)
            .fold(self.intercept, |acc, (&lag, &w)| acc + w * history[n - lag]))
    }
}

/// Least-squares fit with an intercept column.
pub fn fit_linear(training: &[f64], lags: &LagSpec) -> Result<LinearFit, ModelError> {
    solve(training, lags, true)
}

/// Least-squares fit with the intercept pinned at zero.
///
/// Needed when the lagged values satisfy a linear identity with the constant
/// column, e.g. noiseless `x(t) = 0.5·x(t−1) + 0.5·x(t−2)`, whose
/// `x(t−1) + 0.5·x(t−2)` is conserved.
pub fn fit_linear_through_origin(training: &[f64], lags: &LagSpec) -> Result<LinearFit, ModelError> {
    solve(training, lags, false)
}

fn solve(training: &[f64], lags: &LagSpec, intercept: bool) -> Result<LinearFit, ModelError> {
    let k = lags.lags().len();
    let params = k + usize::from(intercept);
    let needed = lags.max_lag() + params + 1;
    if training.len() < needed {
        return Err(ModelError::InsufficientData {
            needed,
            got: training.len(),
        });
    }
    let first = lags.max_lag();
    let rows = training.len() - first;
    let design = DMatrix::from_fn(rows, params, |r, c| {
        let t = first + r;
        if c < k {
            training[t - lags.lags()[c]]
        } else {
            1.0
        }
    });
    let target = DVector::from_iterator(rows, training[first..].iter().copied());

    let qr = design.qr();
    let r = qr.r();
    let diag_max = (0..params).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = rows.max(params) as f64 * f64::EPSILON * diag_max;
    if diag_max == 0.0 || (0..params).any(|i| r[(i, i)].abs() <= tol) {
        return Err(ModelError::SingularFit {
            lags: lags.lags().to_vec(),
        });
    }
    let qty = qr.q().transpose() * target;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| ModelError::SingularFit {
            lags: lags.lags().to_vec(),
        })?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(ModelError::SingularFit {
            lags: lags.lags().to_vec(),
        });
    }
    Ok(LinearFit {
        weights: beta.iter().take(k).copied().collect(),
        intercept: if intercept { beta[k] } else { 0.0 },
    })
}

/// [`Forecaster`] wrapper around [`fit_linear`].
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedLinear {
    lags: LagSpec,
    intercept: bool,
    fit: Option<LinearFit>,
}

impl LaggedLinear {
    pub fn new(lags: LagSpec, intercept: bool) -> Self {
        Self {
            lags,
            intercept,
            fit: None,
        }
    }

    /// Forecaster with fixed coefficients; `fit` re-estimates them.
    pub fn from_fit(lags: LagSpec, fit: LinearFit) -> Self {
        Self {
            lags,
            intercept: true,
            fit: Some(fit),
        }
    }

    pub fn fitted(&self) -> Option<&LinearFit> {
        self.fit.as_ref()
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, ModelError> {
        doc.check("linear")?;
        let lags: Vec<usize> = serde_json::from_value(doc.config["lags"].clone())
            .map_err(|e| ModelError::Document(e.to_string()))?;
        let intercept = doc.config["intercept"].as_bool().unwrap_or(true);
        let fit = LinearFit {
            weights: doc.tensor("weights")?.to_vec(),
            intercept: *doc
                .tensor("intercept")?
                .first()
                .ok_or_else(|| ModelError::Document("empty intercept".into()))?,
        };
        Ok(Self {
            lags: LagSpec::new(lags)?,
            intercept,
            fit: Some(fit),
        })
    }
}

impl Forecaster for LaggedLinear {
    fn name(&self) -> String {
        let lags: Vec<String> = self.lags.lags().iter().map(usize::to_string).collect();
        format!("linear[{}]", lags.join(","))
    }

    fn fit(&mut self, training: &[f64]) -> Result<(), ModelError> {
        self.fit = Some(solve(training, &self.lags, self.intercept)?);
        Ok(())
    }

    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError> {
        self.fit
            .as_ref()
            .ok_or(ModelError::NotFitted)?
            .predict(&self.lags, history)
    }

    fn min_history(&self) -> usize {
        self.lags.max_lag()
    }

    fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument::new(
            "linear",
            serde_json::json!({ "lags": self.lags.lags(), "intercept": self.intercept }),
        );
        if let Some(fit) = &self.fit {
            doc.tensors.insert("weights".into(), fit.weights.clone());
            doc.tensors.insert("intercept".into(), vec![fit.intercept]);
        }
        doc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GeneratorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Normal equations `(XᵀX)β = Xᵀy` solved by Gaussian elimination.
    fn normal_equation_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = x[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (row, &target) in x.iter().zip(y) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
                a[i][p] += row[i] * target;
            }
        }
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn recovers_exact_drift_line() {
        let series: Vec<f64> = (0..50).map(|t| 10.0 + 2.0 * t as f64).collect();
        let fit = fit_linear(&series, &LagSpec::single()).unwrap();
        assert!((fit.weights[0] - 1.0).abs() < 1e-8);
        assert!((fit.intercept - 2.0).abs() < 1e-8);
    }

    #[test]
    fn recovers_two_lag_average() {
        let mut series = vec![0.0, 1.0];
        for t in 2..20 {
            series.push(0.5 * series[t - 1] + 0.5 * series[t - 2]);
        }
        let lags = LagSpec::new(vec![1, 2]).unwrap();
        // with an intercept the design is singular: x(t-1) + 0.5 x(t-2) is constant
        assert_eq!(
            fit_linear(&series, &lags).unwrap_err(),
            ModelError::SingularFit { lags: vec![1, 2] }
        );
        let fit = fit_linear_through_origin(&series, &lags).unwrap();
        assert!((fit.weights[0] - 0.5).abs() < 1e-8, "{fit:?}");
        assert!((fit.weights[1] - 0.5).abs() < 1e-8, "{fit:?}");
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn matches_normal_equations_on_noisy_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut series = vec![50.0];
        for _ in 1..200 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let prev = *series.last().unwrap();
            series.push(0.8 * prev + 10.0 + z);
        }
        let fit = fit_linear(&series, &LagSpec::single()).unwrap();
        let x: Vec<Vec<f64>> = (1..200).map(|t| vec![series[t - 1], 1.0]).collect();
        let oracle = normal_equation_oracle(&x, &series[1..]);
        assert!((fit.weights[0] - oracle[0]).abs() < 1e-6);
        assert!((fit.intercept - oracle[1]).abs() < 1e-6);
    }

    #[test]
    fn unbiased_under_gaussian_noise() {
        let (beta, b) = (0.5, 2.0);
        let estimates: Vec<(f64, f64)> = (0..100)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let mut series = vec![b / (1.0 - beta)];
                for _ in 1..2000 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    series.push(beta * series.last().unwrap() + b + z);
                }
                let fit = fit_linear(&series, &LagSpec::single()).unwrap();
                (fit.weights[0], fit.intercept)
            })
            .collect();
        for (truth, pick) in [(beta, 0usize), (b, 1)] {
            let xs: Vec<f64> = estimates
                .iter()
                .map(|e| if pick == 0 { e.0 } else { e.1 })
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            assert!((mean - truth).abs() < 2.0 * se, "mean {mean}, truth {truth}, se {se}");
        }
    }

    #[test]
    fn lag_validation_and_data_length() {
        assert!(LagSpec::new(vec![]).is_err());
        assert!(LagSpec::new(vec![0, 1]).is_err());
        assert!(LagSpec::new(vec![2, 2]).is_err());
        let err = fit_linear(&[1.0, 2.0, 3.0], &LagSpec::single()).unwrap_err();
        assert!(matches!(err, ModelError::InsufficientData { .. }));
        let lags = LagSpec::calendar_recipe();
        assert_eq!(lags.max_lag(), 63);
    }

    #[test]
    fn constant_series_is_singular() {
        let err = fit_linear(&[5.0; 30], &LagSpec::single()).unwrap_err();
        assert_eq!(err, ModelError::SingularFit { lags: vec![1] });
    }

    #[test]
    fn document_round_trip() {
        let sim = generate(&GeneratorSpec::martingale(0.01, 100.0, 300, 1)).unwrap();
        let mut model = LaggedLinear::new(LagSpec::new(vec![1, 5]).unwrap(), true);
        model.fit(sim.series.values()).unwrap();
        let json = serde_json::to_string(&model.to_document()).unwrap();
        let doc: ModelDocument = serde_json::from_str(&json).unwrap();
        let back = LaggedLinear::from_document(&doc).unwrap();
        assert_eq!(back, model);
    }
}
