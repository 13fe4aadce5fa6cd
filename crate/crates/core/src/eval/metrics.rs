use super::EvalError;

fn check(predictions: &[f64], truths: &[f64]) -> Result<(), EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    check(predictions, truths)?;
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    check(predictions, truths)?;
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors_score_zero() {
        let v = [1.0, -2.0, 3.5];
        assert_eq!(rmse(&v, &v).unwrap(), 0.0);
        assert_eq!(mae(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn hand_arithmetic() {
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(rmse(&[], &[]), Err(EvalError::Empty)));
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn matches_compensated_summation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p: Vec<f64> = (0..1000).map(|_| rng.random_range(-50.0..50.0)).collect();
        let t: Vec<f64> = (0..1000).map(|_| rng.random_range(-50.0..50.0)).collect();
        // Kahan sums of squared and absolute differences
        let kahan = |f: &dyn Fn(f64) -> f64| {
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for i in 0..p.len() {
                let y = f(p[i] - t[i]) - c;
                let s = sum + y;
                c = (s - sum) - y;
                sum = s;
            }
            sum / p.len() as f64
        };
        let r = kahan(&|d| d * d).sqrt();
        let m = kahan(&|d: f64| d.abs());
        assert!((rmse(&p, &t).unwrap() - r).abs() <= 1e-12 * r);
        assert!((mae(&p, &t).unwrap() - m).abs() <= 1e-12 * m);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..200)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = rmse(&p, &t).unwrap();
            let m = mae(&p, &t).unwrap();
            prop_assert!(m >= 0.0);
            prop_assert!(r >= m * (1.0 - 1e-12));
        }

        #[test]
        fn equal_errors_make_rmse_equal_mae(e in 0.0f64..100.0, n in 1usize..50) {
            let p: Vec<f64> = (0..n).map(|i| i as f64 + if i % 2 == 0 { e } else { -e }).collect();
            let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let r = rmse(&p, &t).unwrap();
            let m = mae(&p, &t).unwrap();
            prop_assert!((r - m).abs() <= 1e-9 * (1.0 + m));
        }
    }
}
