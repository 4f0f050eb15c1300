//! Multi-seed train/eval orchestration: shuffled splits shared across
//! methods, forest fits, metric aggregation, cumulated-MAE curves, and
//! pooled one-vs-rest ROC.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::FeatureMatrix;
use crate::forest::{self, ForestConfig, MaxFeatures, Task};
use crate::util::derive_seed;

use super::metrics::{cumulated_mae_curve, mae, mape, one_vs_rest_roc, rmse, RocCurve};

/// Prediction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Regression: cycles to end of life.
    Life,
    /// Binary classification: knee present.
    Knee,
    /// Multi-class classification: interfacial-chemistry pattern.
    Pattern,
}

impl TaskKind {
    pub fn is_regression(self) -> bool {
        matches!(self, TaskKind::Life)
    }
}

/// Feature matrix plus aligned targets for one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub x: FeatureMatrix,
    /// Regression targets, or class ids as f64.
    pub y: Vec<f64>,
    /// 0 for regression.
    pub n_classes: usize,
}

impl TaskData {
    pub fn validate(&self) -> Result<()> {
        if self.x.n_rows() != self.y.len() {
            return Err(Error::invalid(format!(
                "feature matrix has {} rows but {} targets",
                self.x.n_rows(),
                self.y.len()
            )));
        }
        if self.x.n_rows() < 5 {
            return Err(Error::invalid(format!(
                "need at least 5 usable cells, have {}",
                self.x.n_rows()
            )));
        }
        Ok(())
    }
}

/// Evaluation configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub n_seeds: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_seeds: 16,
            base_seed: 0,
            train_fraction: 0.6,
            n_trees: 300,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl TaskConfig {
    fn forest_config(&self, kind: TaskKind, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            max_depth: None,
            bootstrap: self.bootstrap,
            seed,
            task: if kind.is_regression() {
                Task::Regression
            } else {
                Task::Classification
            },
        }
    }
}

/// Deterministic shuffled split; test indices are returned ascending so
/// every method scores test cells in one fixed dataset order.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// The per-seed splits a task evaluation uses, so baselines can run on
/// identical data.
pub fn seed_splits(n: usize, cfg: &TaskConfig) -> Vec<(u64, Vec<usize>, Vec<usize>)> {
    (0..cfg.n_seeds)
        .map(|s| {
            let seed = derive_seed(cfg.base_seed, s as u64);
            let (train, test) = split_indices(n, cfg.train_fraction, seed);
            (seed, train, test)
        })
        .collect()
}

/// Metrics of one seed's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train_mape: Option<f64>,
    pub test_mape: Option<f64>,
    pub train_mae: Option<f64>,
    pub test_mae: Option<f64>,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_macro_auc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanSd {
        mean,
        sd: var.sqrt(),
    }
}

/// Aggregated evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub n_cells: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub per_seed: Vec<SeedOutcome>,
    pub train_mape: Option<MeanSd>,
    pub test_mape: Option<MeanSd>,
    pub train_mae: Option<MeanSd>,
    pub test_mae: Option<MeanSd>,
    pub train_rmse: Option<MeanSd>,
    pub test_rmse: Option<MeanSd>,
    pub train_accuracy: Option<MeanSd>,
    pub test_accuracy: Option<MeanSd>,
    pub test_macro_auc: Option<MeanSd>,
    /// Regression: pointwise mean over seeds of the per-seed cumulated-MAE
    /// curve (test cells in fixed dataset order).
    pub cum_mae_curve: Vec<f64>,
    /// Classification: pooled one-vs-rest ROC per class, plus macro AUC.
    pub roc_per_class: Vec<RocCurve>,
    pub pooled_macro_auc: Option<f64>,
    /// Mean normalized importances, top 20 as `(canonical name, score)`.
    pub importance_top: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct SeedRun {
    outcome: SeedOutcome,
    abs_errors: Vec<f64>,
    proba: Vec<Vec<f64>>,
    labels: Vec<usize>,
    importances: Vec<f64>,
}

fn accuracy(y: &[f64], y_hat: &[f64]) -> f64 {
    let hits = y.iter().zip(y_hat).filter(|(a, b)| a == b).count();
    hits as f64 / y.len() as f64
}

/// Evaluate a forest on a task over `cfg.n_seeds` shuffled splits.
pub fn run_task(kind: TaskKind, data: &TaskData, cfg: &TaskConfig) -> Result<EvalReport> {
    data.validate()?;
    if kind.is_regression() {
        if let Some(k) = data.y.iter().position(|&v| v == 0.0) {
            return Err(Error::invalid(format!(
                "zero life target for cell {}",
                data.x.cell_ids()[k]
            )));
        }
    }
    let n = data.x.n_rows();
    let splits = seed_splits(n, cfg);
    let n_train = splits[0].1.len();
    let n_test = splits[0].2.len();

    // Seeds run sequentially; tree fitting inside each forest is already
    // parallel, and per-seed matrix copies of wide feature spaces are
    // large.
    let runs: Result<Vec<SeedRun>> = splits
        .iter()
        .enumerate()
        .map(|(s, (seed, train_idx, test_idx))| -> Result<SeedRun> {
            let x_train = data.x.subset_rows(train_idx);
            let x_test = data.x.subset_rows(test_idx);
            let y_train: Vec<f64> = train_idx.iter().map(|&r| data.y[r]).collect();
            let y_test: Vec<f64> = test_idx.iter().map(|&r| data.y[r]).collect();
            let fcfg = cfg.forest_config(kind, derive_seed(cfg.base_seed, 10_000 + s as u64));
            let model = forest::fit(&x_train, &y_train, &fcfg)?;
            let report = model.importances(data.x.names())?;

            let mut outcome = SeedOutcome {
                seed: *seed,
                train_mape: None,
                test_mape: None,
                train_mae: None,
                test_mae: None,
                train_rmse: None,
                test_rmse: None,
                train_accuracy: None,
                test_accuracy: None,
                test_macro_auc: None,
            };
            let mut abs_errors = Vec::new();
            let mut proba = Vec::new();
            let mut labels = Vec::new();

            if kind.is_regression() {
                let p_train = model.predict(&x_train)?;
                let p_test = model.predict(&x_test)?;
                outcome.train_mape = Some(mape(&y_train, &p_train)?);
                outcome.test_mape = Some(mape(&y_test, &p_test)?);
                outcome.train_mae = Some(mae(&y_train, &p_train)?);
                outcome.test_mae = Some(mae(&y_test, &p_test)?);
                outcome.train_rmse = Some(rmse(&y_train, &p_train)?);
                outcome.test_rmse = Some(rmse(&y_test, &p_test)?);
                abs_errors = y_test
                    .iter()
                    .zip(&p_test)
                    .map(|(t, p)| (p - t).abs())
                    .collect();
            } else {
                let p_train = model.predict(&x_train)?;
                let p_test = model.predict(&x_test)?;
                outcome.train_accuracy = Some(accuracy(&y_train, &p_train));
                outcome.test_accuracy = Some(accuracy(&y_test, &p_test));
                proba = model.predict_proba(&x_test)?;
                labels = y_test.iter().map(|&v| v as usize).collect();
                if let Ok((_, macro_auc)) = one_vs_rest_roc(&proba, &labels, data.n_classes) {
                    outcome.test_macro_auc = Some(macro_auc);
                }
            }

            Ok(SeedRun {
                outcome,
                abs_errors,
                proba,
                labels,
                importances: report.scores,
            })
        })
        .collect();
    let runs = runs?;

    let collect = |f: fn(&SeedOutcome) -> Option<f64>| -> Option<MeanSd> {
        let vals: Vec<f64> = runs.iter().filter_map(|r| f(&r.outcome)).collect();
        if vals.len() == runs.len() {
            Some(mean_sd(&vals))
        } else {
            None
        }
    };

    // Cumulated-MAE curve: mean over seeds, pointwise.
    let cum_mae_curve = if kind.is_regression() {
        let curves: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| cumulated_mae_curve(&r.abs_errors))
            .collect();
        let len = curves.iter().map(Vec::len).min().unwrap_or(0);
        (0..len)
            .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
            .collect()
    } else {
        Vec::new()
    };

    // Pooled ROC across seeds.
    let (roc_per_class, pooled_macro_auc) = if kind.is_regression() {
        (Vec::new(), None)
    } else {
        let mut proba = Vec::new();
        let mut labels = Vec::new();
        for r in &runs {
            proba.extend(r.proba.iter().cloned());
            labels.extend(r.labels.iter().copied());
        }
        let (curves, macro_auc) = one_vs_rest_roc(&proba, &labels, data.n_classes)?;
        (curves, Some(macro_auc))
    };

    // Mean importances across seeds.
    let mut mean_importance = vec![0.0_f64; data.x.n_cols()];
    for r in &runs {
        for (acc, v) in mean_importance.iter_mut().zip(&r.importances) {
            *acc += v / runs.len() as f64;
        }
    }
    let mut order: Vec<usize> = (0..mean_importance.len()).collect();
    order.sort_by(|&a, &b| {
        mean_importance[b]
            .partial_cmp(&mean_importance[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let importance_top: Vec<(String, f64)> = order
        .into_iter()
        .take(20)
        .map(|c| (data.x.names()[c].clone(), mean_importance[c]))
        .collect();

    Ok(EvalReport {
        task: kind,
        n_cells: n,
        n_features: data.x.n_cols(),
        n_train,
        n_test,
        train_mape: collect(|o| o.train_mape),
        test_mape: collect(|o| o.test_mape),
        train_mae: collect(|o| o.train_mae),
        test_mae: collect(|o| o.test_mae),
        train_rmse: collect(|o| o.train_rmse),
        test_rmse: collect(|o| o.test_rmse),
        train_accuracy: collect(|o| o.train_accuracy),
        test_accuracy: collect(|o| o.test_accuracy),
        test_macro_auc: collect(|o| o.test_macro_auc),
        per_seed: runs.into_iter().map(|r| r.outcome).collect(),
        cum_mae_curve,
        roc_per_class,
        pooled_macro_auc,
        importance_top,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn feature_matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let names: Vec<String> = (0..rows[0].len()).map(|c| format!("f{}", c)).collect();
        let mut m = FeatureMatrix::new(names);
        for (k, row) in rows.iter().enumerate() {
            m.push_row(format!("cell-{:03}", k), row.clone()).unwrap();
        }
        m
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let (tr1, te1) = split_indices(20, 0.6, 9);
        let (tr2, te2) = split_indices(20, 0.6, 9);
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len(), 12);
        assert_eq!(te1.len(), 8);
        let mut all: Vec<usize> = tr1.iter().chain(&te1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        let (tr3, _) = split_indices(20, 0.6, 10);
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn smooth_life_function_is_learnable() {
        let mut rng = StdRng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..12).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 60.0 + 400.0 * r[3]).collect();
        let data = TaskData {
            x: feature_matrix(&rows),
            y,
            n_classes: 0,
        };
        // One informative column among twelve: subset sampling would
        // mostly miss it, so the test scans all features per node.
        let cfg = TaskConfig {
            n_seeds: 4,
            n_trees: 150,
            base_seed: 5,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let report = run_task(TaskKind::Life, &data, &cfg).unwrap();
        let test_mape = report.test_mape.unwrap();
        assert!(test_mape.mean < 5.0, "test MAPE = {:?}", test_mape);
        assert_eq!(report.cum_mae_curve.len(), report.n_test);
        // The informative feature tops the importance table.
        assert_eq!(report.importance_top[0].0, "f3");
    }

    #[test]
    fn thresholded_feature_classification_has_high_auc() {
        let mut rng = StdRng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[2] > 0.5 { 1.0 } else { 0.0 }).collect();
        let data = TaskData {
            x: feature_matrix(&rows),
            y,
            n_classes: 2,
        };
        let cfg = TaskConfig {
            n_seeds: 6,
            n_trees: 120,
            base_seed: 7,
            ..Default::default()
        };
        let report = run_task(TaskKind::Knee, &data, &cfg).unwrap();
        let auc = report.pooled_macro_auc.unwrap();
        assert!(auc > 0.95, "pooled macro AUC = {}", auc);
        assert_eq!(report.roc_per_class.len(), 2);
    }

    #[test]
    fn reports_are_reproducible() {
        let mut rng = StdRng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 10.0 + r[0] * 100.0).collect();
        let data = TaskData {
            x: feature_matrix(&rows),
            y,
            n_classes: 0,
        };
        let cfg = TaskConfig {
            n_seeds: 3,
            n_trees: 40,
            base_seed: 11,
            ..Default::default()
        };
        let a = run_task(TaskKind::Life, &data, &cfg).unwrap();
        let b = run_task(TaskKind::Life, &data, &cfg).unwrap();
        assert_eq!(a, b);
        // JSON round trip.
        let back = EvalReport::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn too_few_cells_rejected() {
        let rows: Vec<Vec<f64>> = (0..4).map(|k| vec![k as f64]).collect();
        let data = TaskData {
            x: feature_matrix(&rows),
            y: vec![1.0, 2.0, 3.0, 4.0],
            n_classes: 0,
        };
        assert!(run_task(TaskKind::Life, &data, &TaskConfig::default()).is_err());
    }
}
