//! Regression and classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "metric inputs must be non-empty and equal length ({} vs {})",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

/// Mean absolute percentage error: `100 · mean(|ŷ−y| / |y|)`. Zero
/// targets are an error naming the offending rows.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let zeros: Vec<usize> = y
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(k, _)| k)
        .collect();
    if !zeros.is_empty() {
        return Err(Error::invalid(format!(
            "MAPE undefined for zero targets at rows {:?}",
            zeros
        )));
    }
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(&t, &p)| ((p - t) / t).abs())
        .sum();
    Ok(100.0 * sum / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(&t, &p)| (p - t).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let ms = y
        .iter()
        .zip(y_hat)
        .map(|(&t, &p)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64;
    Ok(ms.sqrt())
}

/// Cumulated mean absolute error: entry `k` is the mean of the first
/// `k+1` absolute errors, taken in the given (fixed) order.
pub fn cumulated_mae_curve(abs_errors: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(abs_errors.len());
    let mut sum = 0.0;
    for (k, &e) in abs_errors.iter().enumerate() {
        sum += e;
        out.push(sum / (k + 1) as f64);
    }
    out
}

/// One receiver operating characteristic curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` points from (0,0) to
    /// (1,1), thresholds descending.
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area under the curve.
    pub auc: f64,
}

/// ROC by threshold sweep over the unique scores (ties grouped), AUC by
/// the trapezoidal rule. Requires at least one positive and one negative.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels must be non-empty and equal length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "ROC requires at least one positive and one negative label",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut k = 0;
    while k < order.len() {
        // Consume the whole tie group at this score.
        let score = scores[order[k]];
        while k < order.len() && scores[order[k]] == score {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5;
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC per class plus the macro-average AUC.
pub fn one_vs_rest_roc(
    proba: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
) -> Result<(Vec<RocCurve>, f64)> {
    if proba.len() != labels.len() || proba.is_empty() {
        return Err(Error::invalid("probability rows and labels must match"));
    }
    let mut curves = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let scores: Vec<f64> = proba.iter().map(|row| row[class]).collect();
        let binary: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        curves.push(roc_auc(&scores, &binary)?);
    }
    let macro_auc = curves.iter().map(|c| c.auc).sum::<f64>() / n_classes as f64;
    Ok((curves, macro_auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_predictions_are_zero_error() {
        let y = [100.0, 250.0, 75.0];
        assert_eq!(mape(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn single_offset_prediction_hand_values() {
        let y = [100.0];
        let y_hat = [110.0];
        assert!((mape(&y, &y_hat).unwrap() - 10.0).abs() < 1e-12);
        assert!((mae(&y, &y_hat).unwrap() - 10.0).abs() < 1e-12);
        assert!((rmse(&y, &y_hat).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_targets_fail_mape_with_row_numbers() {
        let err = mape(&[10.0, 0.0, 5.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("[1]"), "{}", err);
    }

    #[test]
    fn cumulated_curve_is_running_mean() {
        let curve = cumulated_mae_curve(&[2.0, 4.0, 6.0]);
        assert_eq!(curve, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn perfect_ranking_has_auc_one() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [true, true, true, false, false];
        let roc = roc_auc(&scores, &labels).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn reversed_ranking_has_auc_zero() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 0.0);
    }

    #[test]
    fn all_tied_scores_give_auc_half() {
        let scores = [0.5; 6];
        let labels = [true, false, true, false, true, false];
        let roc = roc_auc(&scores, &labels).unwrap();
        assert!((roc.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_scores_on_balanced_labels_hover_at_half() {
        let mut rng = StdRng::seed_from_u64(20_240_817);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|k| k % 2 == 0).collect();
        let roc = roc_auc(&scores, &labels).unwrap();
        assert!((roc.auc - 0.5).abs() < 0.02, "auc = {}", roc.auc);
    }

    #[test]
    fn one_class_labels_rejected() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn one_vs_rest_macro_average() {
        // Three classes, probabilities aligned with the labels.
        let proba = vec![
            vec![0.8, 0.1, 0.1],
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.1, 0.8],
            vec![0.15, 0.1, 0.75],
        ];
        let labels = vec![0, 0, 1, 1, 2, 2];
        let (curves, macro_auc) = one_vs_rest_roc(&proba, &labels, 3).unwrap();
        assert_eq!(curves.len(), 3);
        for c in &curves {
            assert_eq!(c.auc, 1.0);
        }
        assert_eq!(macro_auc, 1.0);
    }
}
