//! Gaussian GLM with log link on the log of the previous value:
//! `E[x(t)] = exp(β₀ + β₁·ln x(t−1)) = exp(β₀)·x(t−1)^β₁`.
//!
//! At `β₁ = 1` this is the multiplicative drift model `E[x(t)] = exp(β₀)·x(t−1)`,
//! and at `(β₀, β₁) = (0, 1)` it is the martingale.
//!
//! The maximum-likelihood fit minimizes the residual sum of squares
//! `S(θ) = Σ (y − μ)²` (σ² profiles out of the Gaussian likelihood) by
//! Newton-Raphson on the exact Hessian. Internally the predictor is centered,
//! `μ = exp(α + β₁·(z − z̄))`, which decouples the intercept from the slope
//! and keeps the 2×2 system well conditioned; `β₀ = α − β₁·z̄` is recovered
//! at the end.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use super::{last_value, Forecaster, ModelDocument, ModelError};

pub const GLM_TOLERANCE: f64 = 1e-10;
pub const GLM_MAX_ITERATIONS: usize = 100;
const MIN_TRAINING: usize = 10;
const MAX_HALVINGS: usize = 60;
const FLOOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    /// β₀
    pub intercept: f64,
    /// β₁, the exponent on the previous value.
    pub coefficient: f64,
    pub iterations: usize,
    /// True when the last parameter step had max-norm below [`GLM_TOLERANCE`].
    pub converged: bool,
}

impl GlmFit {
    pub fn identity() -> Self {
        Self {
            intercept: 0.0,
            coefficient: 1.0,
            iterations: 0,
            converged: true,
        }
    }
}

pub fn glm_predict(fit: &GlmFit, history: &[f64]) -> Result<f64, ModelError> {
    let last = last_value(history)?;
    if !(last > 0.0) {
        return Err(ModelError::Domain {
            index: history.len() - 1,
            value: last,
        });
    }
    Ok(fit.intercept.exp() * last.powf(fit.coefficient))
}

struct Problem {
    z: Vec<f64>,
    y: Vec<f64>,
}

impl Problem {
    fn rss(&self, theta: Vector2<f64>) -> f64 {
        self.z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| {
                let mu = (theta[0] + theta[1] * z).exp();
                (y - mu) * (y - mu)
            })
            .sum()
    }

    /// Gradient, exact Hessian and Fisher information of `S` at `theta`.
    fn derivatives(&self, theta: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>, Matrix2<f64>) {
        let mut grad = Vector2::zeros();
        let mut hess = Matrix2::zeros();
        let mut fisher = Matrix2::zeros();
        for (&z, &y) in self.z.iter().zip(&self.y) {
            let x = Vector2::new(1.0, z);
            let mu = (theta[0] + theta[1] * z).exp();
            let r = y - mu;
            grad -= 2.0 * r * mu * x;
            let outer = x * x.transpose();
            hess += 2.0 * (mu * mu - r * mu) * outer;
            fisher += 2.0 * mu * mu * outer;
        }
        (grad, hess, fisher)
    }
}

/// Minimum-norm solution of `m·δ = rhs`, dropping near-null eigendirections.
/// `None` when `m` is not positive semidefinite.
fn psd_solve(m: Matrix2<f64>, rhs: Vector2<f64>) -> Option<Vector2<f64>> {
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Some(Vector2::zeros());
    }
    let cutoff = 1e-12 * scale;
    let mut out = Vector2::zeros();
    for i in 0..2 {
        let lambda = eig.eigenvalues[i];
        if lambda < -cutoff {
            return None;
        }
        if lambda > cutoff {
            let v = eig.eigenvectors.column(i);
            out += v * (v.dot(&rhs) / lambda);
        }
    }
    Some(out)
}

pub fn fit_glm(training: &[f64]) -> Result<GlmFit, ModelError> {
    if training.len() < MIN_TRAINING {
        return Err(ModelError::InsufficientData {
            needed: MIN_TRAINING,
            got: training.len(),
        });
    }
    if let Some((index, &value)) = training.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(ModelError::Domain { index, value });
    }
    let logs: Vec<f64> = training.iter().map(|v| v.ln()).collect();
    let n = (training.len() - 1) as f64;
    let z_mean = logs[..logs.len() - 1].iter().sum::<f64>() / n;
    let problem = Problem {
        z: logs[..logs.len() - 1].iter().map(|z| z - z_mean).collect(),
        y: training[1..].to_vec(),
    };

    // start from least squares of ln y on the centered predictor
    let ln_y = &logs[1..];
    let szz: f64 = problem.z.iter().map(|z| z * z).sum();
    let szy: f64 = problem.z.iter().zip(ln_y).map(|(z, l)| z * l).sum();
    let slope = if szz > 1e-24 * n { szy / szz } else { 1.0 };
    let mut theta = Vector2::new(ln_y.iter().sum::<f64>() / n, slope);
    let mut current = problem.rss(theta);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < GLM_MAX_ITERATIONS {
        iterations += 1;
        let (grad, hess, fisher) = problem.derivatives(theta);
        if !grad.iter().chain(hess.iter()).all(|v| v.is_finite()) {
            return Err(ModelError::FitDiverged {
                iteration: iterations,
            });
        }
        // Newton when the Hessian is PSD and gives descent, Fisher scoring otherwise.
        let direction = psd_solve(hess, -grad)
            .filter(|d| d.dot(&grad) <= 0.0)
            .or_else(|| psd_solve(fisher, -grad))
            .ok_or(ModelError::FitDiverged {
                iteration: iterations,
            })?;
        if !direction.iter().all(|v| v.is_finite()) {
            return Err(ModelError::FitDiverged {
                iteration: iterations,
            });
        }

        let mut step = direction;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = theta + step;
            let value = problem.rss(candidate);
            if value.is_finite() && value <= current {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }
        let original_norm =
            |d: Vector2<f64>| d[1].abs().max((d[0] - d[1] * z_mean).abs());
        match accepted {
            Some((candidate, value)) => {
                theta = candidate;
                current = value;
                if original_norm(step) < GLM_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            None => {
                // no representable decrease: the iterate sits at the rounding floor
                converged = original_norm(direction) < FLOOR_TOLERANCE;
                break;
            }
        }
    }
    Ok(GlmFit {
        intercept: theta[0] - theta[1] * z_mean,
        coefficient: theta[1],
        iterations,
        converged,
    })
}

/// [`Forecaster`] wrapper around [`fit_glm`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogLinkGlm {
    fit: Option<GlmFit>,
}

impl LogLinkGlm {
    pub fn from_fit(fit: GlmFit) -> Self {
        Self { fit: Some(fit) }
    }

    pub fn fitted(&self) -> Option<&GlmFit> {
        self.fit.as_ref()
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, ModelError> {
        doc.check("glm")?;
        let scalar = |name: &str| -> Result<f64, ModelError> {
            doc.tensor(name)?
                .first()
                .copied()
                .ok_or_else(|| ModelError::Document(format!("empty tensor '{name}'")))
        };
        Ok(Self::from_fit(GlmFit {
            intercept: scalar("intercept")?,
            coefficient: scalar("coefficient")?,
            iterations: doc.config["iterations"].as_u64().unwrap_or(0) as usize,
            converged: doc.config["converged"].as_bool().unwrap_or(false),
        }))
    }
}

impl Forecaster for LogLinkGlm {
    fn name(&self) -> String {
        "glm".into()
    }

    fn fit(&mut self, training: &[f64]) -> Result<(), ModelError> {
        let fit = fit_glm(training)?;
        if !fit.converged {
            log::warn!(
                "GLM stopped after {} iterations without meeting the step tolerance",
                fit.iterations
            );
        }
        self.fit = Some(fit);
        Ok(())
    }

    fn predict_next(&self, history: &[f64]) -> Result<f64, ModelError> {
        glm_predict(self.fit.as_ref().ok_or(ModelError::NotFitted)?, history)
    }

    fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument::new(
            "glm",
            match &self.fit {
                Some(f) => serde_json::json!({
                    "iterations": f.iterations,
                    "converged": f.converged,
                    "tolerance": GLM_TOLERANCE,
                    "max_iterations": GLM_MAX_ITERATIONS,
                }),
                None => serde_json::Value::Null,
            },
        );
        if let Some(f) = &self.fit {
            doc.tensors.insert("intercept".into(), vec![f.intercept]);
            doc.tensors.insert("coefficient".into(), vec![f.coefficient]);
        }
        doc
    }
}
