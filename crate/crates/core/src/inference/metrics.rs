use serde::{Deserialize, Serialize};

use crate::error::{HobzError, Result};

/// Agreement between predicted and observed responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Adjusted R^2 of the least-squares regression of observed on predicted.
    pub adj_r2: f64,
    /// Set when the predictions have zero variance and `adj_r2` is reported as 0.
    pub degenerate: bool,
}

pub fn compute_metrics(predicted: &[f64], observed: &[f64]) -> Result<MetricsReport> {
    let n = predicted.len();
    if n != observed.len() {
        return Err(HobzError::validation(format!(
            "{n} predictions for {} observations",
            observed.len()
        )));
    }
    if n < 3 {
        return Err(HobzError::validation("metrics need at least 3 rows"));
    }
    if predicted.iter().chain(observed).any(|v| !v.is_finite()) {
        return Err(HobzError::validation("metrics inputs must be finite"));
    }
    let nf = n as f64;
    let mae = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o).abs())
        .sum::<f64>()
        / nf;
    let mse = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p - o).powi(2))
        .sum::<f64>()
        / nf;

    let mp = predicted.iter().sum::<f64>() / nf;
    let mo = observed.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, o) in predicted.iter().zip(observed) {
        let dp = p - mp;
        let dobs = o - mo;
        sxx += dp * dp;
        sxy += dp * dobs;
        syy += dobs * dobs;
    }
    let scale = predicted.iter().map(|p| p.abs()).fold(0.0, f64::max).max(1e-300);
    let degenerate = sxx <= (1e-14 * scale).powi(2) * nf;
    let adj_r2 = if degenerate {
        0.0
    } else if syy == 0.0 {
        // observed constant: a perfect (flat) fit only if predictions are constant too
        0.0
    } else {
        let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
        1.0 - (1.0 - r2) * (nf - 1.0) / (nf - 2.0)
    };
    Ok(MetricsReport {
        mae,
        mse,
        rmse: mse.sqrt(),
        adj_r2,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let y = [0.1, 0.5, 0.9, 0.0, 1.0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.mae, m.mse), (0.0, 0.0));
        assert!((m.adj_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_is_a_perfect_linear_fit() {
        let y = [0.1, 0.5, 0.9, 0.0, 0.7];
        let p: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        let m = compute_metrics(&p, &y).unwrap();
        assert!((m.mae - 0.1).abs() < 1e-12);
        assert!((m.mse - 0.01).abs() < 1e-12);
        assert!((m.adj_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictions_flagged() {
        let m = compute_metrics(&[0.5; 4], &[0.1, 0.2, 0.9, 1.0]).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.adj_r2, 0.0);
    }

    #[test]
    fn input_errors() {
        assert!(compute_metrics(&[0.1, 0.2], &[0.1, 0.2]).is_err());
        assert!(compute_metrics(&[0.1, 0.2, 0.3], &[0.1, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn adj_r2_is_affine_invariant(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 5..40),
            a in -3.0f64..3.0,
            b in 0.1f64..5.0,
        ) {
            let (p, o): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = compute_metrics(&p, &o).unwrap();
            let q: Vec<f64> = p.iter().map(|v| a + b * v).collect();
            let moved = compute_metrics(&q, &o).unwrap();
            prop_assume!(!base.degenerate);
            prop_assert!((base.adj_r2 - moved.adj_r2).abs() < 1e-9);
            prop_assert!(base.adj_r2 <= 1.0 && base.mae >= 0.0);
        }
    }
}
