//! ΔQ(V) baseline models: the single-feature variance model (ordinary
//! least squares of log10 life on log10 var(ΔQ)) and ridge regression on
//! the full ΔQ(V) vector. Both predict in log10(cycles) and report errors
//! in cycles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::nanstats::nanvar;

use super::metrics::{mae, mape, rmse};

/// Train/test error summary of a baseline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub train_mape: f64,
    pub test_mape: f64,
    pub train_mae: f64,
    pub test_mae: f64,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Cells dropped for an unusable feature (non-positive or NaN
    /// variance).
    pub dropped: usize,
    /// Predicted lives of the (retained) test cells, input order.
    pub test_predictions: Vec<f64>,
    /// Absolute test errors, input order (for cumulated-MAE curves).
    pub test_abs_errors: Vec<f64>,
}

/// Variance model: one cell = one `(ΔQ(V) vector, observed life)` pair.
/// Fits log10(life) = a + b · log10(var(ΔQ)) on the training cells.
pub fn variance_model(
    train: &[(Vec<f64>, f64)],
    test: &[(Vec<f64>, f64)],
) -> Result<BaselineReport> {
    let feature = |dq: &[f64]| -> Option<f64> {
        let v = nanvar(dq);
        if v.is_finite() && v > 0.0 {
            Some(v.log10())
        } else {
            None
        }
    };
    let mut dropped = 0usize;
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    for (dq, life) in train {
        match feature(dq) {
            Some(f) => {
                fx.push(f);
                fy.push(life.log10());
            }
            None => dropped += 1,
        }
    }
    if fx.len() < 3 {
        return Err(Error::invalid(format!(
            "variance baseline needs at least 3 usable training cells, has {}",
            fx.len()
        )));
    }

    // Ordinary least squares with intercept.
    let n = fx.len() as f64;
    let mx = fx.iter().sum::<f64>() / n;
    let my = fy.iter().sum::<f64>() / n;
    let sxx: f64 = fx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = fx.iter().zip(&fy).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;

    let predict = |dq: &[f64]| -> f64 {
        let f = feature(dq).unwrap_or(mx);
        10f64.powf(intercept + slope * f)
    };

    let (train_y, train_p): (Vec<f64>, Vec<f64>) = train
        .iter()
        .filter(|(dq, _)| feature(dq).is_some())
        .map(|(dq, life)| (*life, predict(dq)))
        .unzip();
    // Test cells with an unusable feature fall back to the training-mean
    // feature rather than being dropped, so every test cell is scored.
    let (test_y, test_p): (Vec<f64>, Vec<f64>) =
        test.iter().map(|(dq, life)| (*life, predict(dq))).unzip();

    report(&train_y, &train_p, &test_y, &test_p, dropped)
}

/// Ridge regression of log10(life) on the standardized ΔQ(V) vector.
/// Grid points that are NaN in any train or test cell are dropped.
pub fn ridge_model(
    train: &[(Vec<f64>, f64)],
    test: &[(Vec<f64>, f64)],
    lambda: f64,
) -> Result<BaselineReport> {
    if train.len() < 3 {
        return Err(Error::invalid("ridge baseline needs at least 3 training cells"));
    }
    let width = train[0].0.len();
    if train
        .iter()
        .chain(test)
        .any(|(dq, _)| dq.len() != width)
    {
        return Err(Error::invalid("ΔQ vectors must share one grid"));
    }
    let usable: Vec<usize> = (0..width)
        .filter(|&c| {
            train
                .iter()
                .chain(test)
                .all(|(dq, _)| dq[c].is_finite())
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid("no ΔQ grid point is finite across all cells"));
    }

    // Standardize columns on the training set.
    let n = train.len() as f64;
    let means: Vec<f64> = usable
        .iter()
        .map(|&c| train.iter().map(|(dq, _)| dq[c]).sum::<f64>() / n)
        .collect();
    let sds: Vec<f64> = usable
        .iter()
        .zip(&means)
        .map(|(&c, &m)| {
            let v = train.iter().map(|(dq, _)| (dq[c] - m) * (dq[c] - m)).sum::<f64>() / n;
            v.sqrt().max(1e-12)
        })
        .collect();
    let featurize = |dq: &[f64]| -> Vec<f64> {
        usable
            .iter()
            .zip(means.iter().zip(&sds))
            .map(|(&c, (&m, &s))| (dq[c] - m) / s)
            .collect()
    };

    let x: Vec<Vec<f64>> = train.iter().map(|(dq, _)| featurize(dq)).collect();
    let y: Vec<f64> = train.iter().map(|(_, life)| life.log10()).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let d = usable.len();

    // Normal equations (XᵀX + λI) β = Xᵀ(y − ȳ).
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (row, &target) in x.iter().zip(&y) {
        for i in 0..d {
            b[i] += row[i] * (target - y_mean);
            for j in i..d {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
        a[i][i] += lambda;
    }
    let beta = solve_linear(a, b)?;

    let predict = |dq: &[f64]| -> f64 {
        let f = featurize(dq);
        let log_life = y_mean + f.iter().zip(&beta).map(|(v, w)| v * w).sum::<f64>();
        10f64.powf(log_life)
    };

    let (train_y, train_p): (Vec<f64>, Vec<f64>) =
        train.iter().map(|(dq, life)| (*life, predict(dq))).unzip();
    let (test_y, test_p): (Vec<f64>, Vec<f64>) =
        test.iter().map(|(dq, life)| (*life, predict(dq))).unzip();
    report(&train_y, &train_p, &test_y, &test_p, 0)
}

fn report(
    train_y: &[f64],
    train_p: &[f64],
    test_y: &[f64],
    test_p: &[f64],
    dropped: usize,
) -> Result<BaselineReport> {
    Ok(BaselineReport {
        train_mape: mape(train_y, train_p)?,
        test_mape: mape(test_y, test_p)?,
        train_mae: mae(train_y, train_p)?,
        test_mae: mae(test_y, test_p)?,
        train_rmse: rmse(train_y, train_p)?,
        test_rmse: rmse(test_y, test_p)?,
        dropped,
        test_predictions: test_p.to_vec(),
        test_abs_errors: test_y
            .iter()
            .zip(test_p)
            .map(|(t, p)| (p - t).abs())
            .collect(),
    })
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::invalid("singular system in ridge solve"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}
