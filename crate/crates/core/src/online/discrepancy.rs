use super::OnlineError;

/// Weights over past rounds plus the size of the recent target window.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyWeights {
    q_time: Vec<f64>,
    window: usize,
}

impl DiscrepancyWeights {
    pub fn new(q_time: Vec<f64>, window: usize) -> Result<Self, OnlineError> {
        if q_time.is_empty() {
            return Err(OnlineError::Weights("no rounds".into()));
        }
        if let Some(q) = q_time.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(OnlineError::Weights(format!("weight {q} is not a nonnegative number")));
        }
        let sum: f64 = q_time.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(OnlineError::Weights(format!("weights sum to {sum}, not 1")));
        }
        if window == 0 {
            return Err(OnlineError::Weights("window must be at least 1".into()));
        }
        if window > q_time.len() {
            return Err(OnlineError::WindowTooLarge {
                window,
                rounds: q_time.len(),
            });
        }
        Ok(Self { q_time, window })
    }

    /// Uniform weight on the last `suffix` of `rounds` rounds, zero before.
    pub fn suffix_uniform(rounds: usize, suffix: usize, window: usize) -> Result<Self, OnlineError> {
        if suffix == 0 || suffix > rounds {
            return Err(OnlineError::WindowTooLarge {
                window: suffix,
                rounds,
            });
        }
        let mut q = vec![0.0; rounds];
        q[rounds - suffix..].fill(1.0 / suffix as f64);
        // absorb the rounding of s · (1/s) into the last weight
        let sum: f64 = q.iter().sum();
        q[rounds - 1] += 1.0 - sum;
        Self::new(q, window)
    }

    pub fn q_time(&self) -> &[f64] {
        &self.q_time
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn rounds(&self) -> usize {
        self.q_time.len()
    }

    /// `‖q‖₂`, the effective-sample-size term of the weighting.
    pub fn l2_norm(&self) -> f64 {
        self.q_time.iter().map(|q| q * q).sum::<f64>().sqrt()
    }

    /// `Σ_t q(t)·values[t]`.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        self.q_time.iter().zip(values).map(|(q, v)| q * v).sum()
    }
}

/// Largest gap, over experts, between the mean loss on the last `s` rounds
/// and the `q`-weighted loss over all rounds. `losses` is `[expert][round]`.
///
/// This restricts the supremum over hypotheses to the finite expert set.
pub fn estimate_discrepancy(losses: &[Vec<f64>], weights: &DiscrepancyWeights) -> Result<f64, OnlineError> {
    let rounds = weights.rounds();
    if losses.is_empty() || losses.iter().any(|row| row.len() != rounds) {
        return Err(OnlineError::LossShape);
    }
    let s = weights.window();
    Ok(losses
        .iter()
        .map(|row| {
            let recent = row[rounds - s..].iter().sum::<f64>() / s as f64;
            (recent - weights.weighted_mean(row)).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_validate() {
        assert!(DiscrepancyWeights::new(vec![0.5, 0.5], 1).is_ok());
        assert!(DiscrepancyWeights::new(vec![0.5, 0.6], 1).is_err());
        assert!(DiscrepancyWeights::new(vec![1.5, -0.5], 1).is_err());
        assert!(DiscrepancyWeights::new(vec![0.5, 0.5], 0).is_err());
        assert!(matches!(
            DiscrepancyWeights::new(vec![0.5, 0.5], 3),
            Err(OnlineError::WindowTooLarge { window: 3, rounds: 2 })
        ));
        let w = DiscrepancyWeights::suffix_uniform(7, 3, 2).unwrap();
        assert_eq!(&w.q_time()[..4], &[0.0; 4]);
    }

    #[test]
    fn target_equal_to_sample_is_zero() {
        let losses = vec![vec![0.3, 1.7, 2.2, 0.9, 4.1, 0.01, 3.3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]];
        for s in 1..=7 {
            let w = DiscrepancyWeights::suffix_uniform(7, s, s).unwrap();
            assert!(estimate_discrepancy(&losses, &w).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn constant_losses_are_zero() {
        let losses = vec![vec![2.5; 10], vec![0.5; 10]];
        let w = DiscrepancyWeights::new(vec![0.1; 10], 3).unwrap();
        assert!(estimate_discrepancy(&losses, &w).unwrap() <= 1e-12);
    }

    #[test]
    fn hand_built_matrix_matches_brute_force() {
        let losses = vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![6.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        ];
        let q = vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.1];
        let w = DiscrepancyWeights::new(q.clone(), 2).unwrap();
        // expert 0: recent 5.5, weighted 0.1+0.4+0.9+0.4+1.0+0.6 = 3.4 → 2.1
        // expert 1: recent 0.0, weighted 0.6+0.2+0.3+0.1 = 1.2 → 1.2
        let mut best: f64 = 0.0;
        for row in &losses {
            let recent = (row[4] + row[5]) / 2.0;
            let mut weighted = 0.0;
            for t in 0..6 {
                weighted += q[t] * row[t];
            }
            best = best.max((recent - weighted).abs());
        }
        assert!((best - 2.1).abs() < 1e-12);
        assert!((estimate_discrepancy(&losses, &w).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariant() {
        let a = vec![vec![1.0, 5.0, 2.0, 8.0], vec![3.0, 3.0, 0.0, 1.0], vec![0.5, 0.5, 9.0, 0.0]];
        let mut b = a.clone();
        b.rotate_left(1);
        let w = DiscrepancyWeights::suffix_uniform(4, 4, 2).unwrap();
        assert_eq!(estimate_discrepancy(&a, &w).unwrap(), estimate_discrepancy(&b, &w).unwrap());
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let w = DiscrepancyWeights::suffix_uniform(3, 3, 1).unwrap();
        assert_eq!(estimate_discrepancy(&[vec![1.0, 2.0]], &w).unwrap_err(), OnlineError::LossShape);
    }
}
