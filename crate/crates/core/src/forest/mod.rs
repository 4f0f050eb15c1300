//! Random forest (regression and classification) built from scratch:
//! bootstrap sampling, per-node feature subsampling, midpoint threshold
//! candidates, and impurity-decrease feature importances.
//!
//! Determinism: every tree draws from its own RNG stream derived from the
//! forest seed, so fits are bit-reproducible and trees can be built in
//! parallel. Ties in split search resolve to the lowest feature index,
//! then the lowest threshold.

mod tree;

pub use tree::{DecisionTree, Node};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::FeatureMatrix;
use crate::util::derive_seed;

/// Per-node feature subsampling rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Third,
    All,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Third => n_features / 3,
            MaxFeatures::All => n_features,
        }
        .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    pub task: Task,
}

impl ForestConfig {
    /// Conventional regression defaults: 300 trees, one third of the
    /// features per node.
    pub fn regression(seed: u64) -> Self {
        ForestConfig {
            n_trees: 300,
            max_features: MaxFeatures::Third,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed,
            task: Task::Regression,
        }
    }

    /// Conventional classification defaults: 300 trees, √p features.
    pub fn classification(seed: u64) -> Self {
        ForestConfig {
            max_features: MaxFeatures::Sqrt,
            task: Task::Classification,
            ..ForestConfig::regression(seed)
        }
    }
}

/// A fitted forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    /// Number of classes (0 for regression).
    pub n_classes: usize,
    /// Per-column substitute for NaN inputs, strictly below the column's
    /// observed finite minimum at fit time.
    pub nan_sentinels: Vec<f64>,
    /// Unnormalized impurity decrease per feature, summed across trees.
    importance_raw: Vec<f64>,
}

/// Feature importances normalized to sum 1, with a ranked name table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Per-column normalized score, in column order.
    pub scores: Vec<f64>,
    /// `(canonical feature name, score)` sorted by descending score.
    pub ranked: Vec<(String, f64)>,
}

impl ImportanceReport {
    /// Top-`n` rows rendered as `name\tscore` lines with six-decimal
    /// scores.
    pub fn table(&self, n: usize) -> String {
        let mut out = String::new();
        for (k, (name, score)) in self.ranked.iter().take(n).enumerate() {
            out.push_str(&format!("{}\t{}\t{:.6}\n", k, name, score));
        }
        out
    }
}

/// Column-major copy of the matrix with NaNs replaced by sentinels.
struct DenseColumns {
    cols: Vec<f64>,
    n_rows: usize,
}

impl DenseColumns {
    fn column(&self, c: usize) -> &[f64] {
        &self.cols[c * self.n_rows..(c + 1) * self.n_rows]
    }
}

fn build_columns(x: &FeatureMatrix) -> (DenseColumns, Vec<f64>) {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut sentinels = vec![0.0_f64; p];
    let mut cols = vec![0.0_f64; n * p];
    for c in 0..p {
        let mut min = f64::INFINITY;
        for r in 0..n {
            let v = x.get(r, c);
            if v.is_finite() && v < min {
                min = v;
            }
        }
        let sentinel = if min.is_finite() {
            min - 1.0 - min.abs() * 1e-3
        } else {
            -1.0
        };
        sentinels[c] = sentinel;
        for r in 0..n {
            let v = x.get(r, c);
            cols[c * n + r] = if v.is_nan() { sentinel } else { v };
        }
    }
    (DenseColumns { cols, n_rows: n }, sentinels)
}

/// Fit a forest. Classification targets must be small non-negative
/// integers (class ids).
pub fn fit(x: &FeatureMatrix, y: &[f64], config: &ForestConfig) -> Result<RandomForest> {
    if x.n_rows() < 2 {
        return Err(Error::invalid("need at least 2 training rows"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::invalid(format!(
            "matrix has {} rows but {} targets given",
            x.n_rows(),
            y.len()
        )));
    }
    if config.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    let n_classes = match config.task {
        Task::Regression => 0,
        Task::Classification => {
            let mut max = 0usize;
            for &v in y {
                if v < 0.0 || v.fract() != 0.0 || v.is_nan() {
                    return Err(Error::invalid(format!(
                        "classification target {} is not a small non-negative integer",
                        v
                    )));
                }
                max = max.max(v as usize);
            }
            max + 1
        }
    };

    let (columns, nan_sentinels) = build_columns(x);

    let results: Vec<(DecisionTree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            tree::grow(
                &columns,
                y,
                n_classes,
                config,
                derive_seed(config.seed, t as u64),
            )
        })
        .collect();

    let mut importance_raw = vec![0.0_f64; x.n_cols()];
    let mut trees = Vec::with_capacity(config.n_trees);
    for (tree, contrib) in results {
        for (acc, v) in importance_raw.iter_mut().zip(&contrib) {
            *acc += v;
        }
        trees.push(tree);
    }

    Ok(RandomForest {
        config: *config,
        trees,
        n_features: x.n_cols(),
        n_classes,
        nan_sentinels,
        importance_raw,
    })
}

impl RandomForest {
    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::invalid(format!(
                "model expects {} columns, matrix has {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok(())
    }

    fn mapped_row(&self, x: &FeatureMatrix, r: usize) -> Vec<f64> {
        x.row(r)
            .iter()
            .zip(&self.nan_sentinels)
            .map(|(&v, &s)| if v.is_nan() { s } else { v })
            .collect()
    }

    /// Regression: mean of tree outputs. Classification: class id of the
    /// highest mean leaf frequency (lowest index wins ties).
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        match self.config.task {
            Task::Regression => Ok((0..x.n_rows())
                .map(|r| {
                    let row = self.mapped_row(x, r);
                    let sum: f64 = self.trees.iter().map(|t| t.predict_value(&row)).sum();
                    sum / self.trees.len() as f64
                })
                .collect()),
            Task::Classification => {
                let proba = self.predict_proba(x)?;
                Ok(proba
                    .into_iter()
                    .map(|row| {
                        let mut best = 0usize;
                        for (k, &p) in row.iter().enumerate() {
                            if p > row[best] {
                                best = k;
                            }
                        }
                        best as f64
                    })
                    .collect())
            }
        }
    }

    /// Mean of per-tree leaf class frequencies; each row sums to 1.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_width(x)?;
        if self.config.task != Task::Classification {
            return Err(Error::invalid("predict_proba requires a classification model"));
        }
        let mut out = Vec::with_capacity(x.n_rows());
        for r in 0..x.n_rows() {
            let row = self.mapped_row(x, r);
            let mut acc = vec![0.0; self.n_classes];
            for tree in &self.trees {
                let counts = tree.predict_counts(&row);
                let total: usize = counts.iter().sum();
                for (a, &c) in acc.iter_mut().zip(counts) {
                    *a += c as f64 / total as f64;
                }
            }
            let sum: f64 = acc.iter().sum();
            for a in acc.iter_mut() {
                *a /= sum;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Normalized impurity-decrease importances. All-zero when no split
    /// exists anywhere in the forest.
    pub fn importances(&self, names: &[String]) -> Result<ImportanceReport> {
        if names.len() != self.n_features {
            return Err(Error::invalid(format!(
                "expected {} feature names, got {}",
                self.n_features,
                names.len()
            )));
        }
        let total: f64 = self.importance_raw.iter().sum();
        let scores: Vec<f64> = if total > 0.0 {
            self.importance_raw.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.n_features]
        };
        let mut order: Vec<usize> = (0..self.n_features).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let ranked = order
            .into_iter()
            .map(|c| (names[c].clone(), scores[c]))
            .collect();
        Ok(ImportanceReport { scores, ranked })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let p = rows[0].len();
        let names: Vec<String> = (0..p).map(|c| format!("f{}", c)).collect();
        let mut m = FeatureMatrix::new(names);
        for (r, row) in rows.iter().enumerate() {
            m.push_row(format!("cell-{}", r), row.clone()).unwrap();
        }
        m
    }

    fn noise_matrix(n: usize, p: usize, seed: u64) -> (FeatureMatrix, StdRng) {
        let mut rng = StdRng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
            .collect();
        (matrix(&rows), rng)
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = noise_matrix(30, 5, 1);
        let y = vec![4.25; 30];
        let model = fit(&x, &y, &ForestConfig::regression(7)).unwrap();
        for p in model.predict(&x).unwrap() {
            assert_eq!(p, 4.25);
        }
        // No split anywhere: importances all zero.
        let names: Vec<String> = x.names().to_vec();
        let report = model.importances(&names).unwrap();
        assert!(report.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn planted_informative_feature_dominates_importance() {
        let (x, _) = noise_matrix(200, 51, 2);
        // Target is exactly column 7 among 50 noise columns.
        let y: Vec<f64> = (0..200).map(|r| x.get(r, 7)).collect();
        let cfg = ForestConfig {
            n_trees: 60,
            ..ForestConfig::regression(3)
        };
        let model = fit(&x, &y, &cfg).unwrap();
        let names: Vec<String> = x.names().to_vec();
        let report = model.importances(&names).unwrap();
        assert_eq!(report.ranked[0].0, "f7");
        assert!(report.ranked[0].1 > 0.5, "score = {}", report.ranked[0].1);
        let sum: f64 = report.scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(report.scores.iter().all(|&s| s >= 0.0));

        // Rendered table: id, name, six-decimal score per row.
        let table = report.table(3);
        let first = table.lines().next().unwrap();
        let fields: Vec<&str> = first.split('\t').collect();
        assert_eq!(fields[0], "0");
        assert_eq!(fields[1], "f7");
        assert_eq!(fields[2].split('.').nth(1).unwrap().len(), 6);
    }

    #[test]
    fn same_seed_refits_are_bit_identical() {
        let (x, mut rng) = noise_matrix(60, 10, 4);
        let y: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 10.0).collect();
        let cfg = ForestConfig {
            n_trees: 25,
            ..ForestConfig::regression(11)
        };
        let a = fit(&x, &y, &cfg).unwrap();
        let b = fit(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }

    #[test]
    fn unbootstrapped_deep_forest_reproduces_distinct_training_rows() {
        let (x, mut rng) = noise_matrix(40, 6, 5);
        let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let cfg = ForestConfig {
            n_trees: 10,
            bootstrap: false,
            ..ForestConfig::regression(13)
        };
        let model = fit(&x, &y, &cfg).unwrap();
        for (p, t) in model.predict(&x).unwrap().iter().zip(&y) {
            assert!((p - t).abs() < 1e-12, "{} vs {}", p, t);
        }
    }

    #[test]
    fn linearly_separable_classes_reach_perfect_training_accuracy() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = StdRng::seed_from_u64(6);
        for k in 0..80 {
            let class = (k % 2) as f64;
            let base = if k % 2 == 0 { 0.0 } else { 5.0 };
            rows.push(vec![
                base + rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ]);
            y.push(class);
        }
        let x = matrix(&rows);
        let model = fit(&x, &y, &ForestConfig::classification(17)).unwrap();
        let pred = model.predict(&x).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = StdRng::seed_from_u64(8);
        for k in 0..90 {
            rows.push(vec![rng.random::<f64>(), rng.random::<f64>()]);
            y.push((k % 3) as f64);
        }
        let x = matrix(&rows);
        let cfg = ForestConfig {
            n_trees: 40,
            ..ForestConfig::classification(19)
        };
        let model = fit(&x, &y, &cfg).unwrap();
        for row in model.predict_proba(&x).unwrap() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum = {}", s);
        }
    }

    #[test]
    fn single_tree_forest_predicts_its_tree() {
        let (x, mut rng) = noise_matrix(25, 4, 9);
        let y: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..ForestConfig::regression(23)
        };
        let model = fit(&x, &y, &cfg).unwrap();
        let preds = model.predict(&x).unwrap();
        for (r, p) in preds.iter().enumerate() {
            let row: Vec<f64> = x.row(r).to_vec();
            assert_eq!(*p, model.trees[0].predict_value(&row));
        }
    }

    #[test]
    fn nan_features_are_isolated_by_the_sentinel() {
        // Class 1 iff feature 0 is NaN; the sentinel makes that split
        // learnable and prediction-time NaNs map the same way.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = StdRng::seed_from_u64(10);
        for k in 0..60 {
            let is_nan = k % 2 == 0;
            rows.push(vec![
                if is_nan { f64::NAN } else { rng.random::<f64>() + 0.5 },
                rng.random::<f64>(),
            ]);
            y.push(if is_nan { 1.0 } else { 0.0 });
        }
        let x = matrix(&rows);
        let model = fit(&x, &y, &ForestConfig::classification(29)).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
        assert!(model.nan_sentinels[0] < 0.5);
    }

    #[test]
    fn column_mismatch_is_an_error() {
        let (x, _) = noise_matrix(20, 4, 11);
        let y: Vec<f64> = (0..20).map(|r| r as f64).collect();
        let model = fit(&x, &y, &ForestConfig::regression(1)).unwrap();
        let (narrow, _) = noise_matrix(5, 3, 12);
        assert!(model.predict(&narrow).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let (x, mut rng) = noise_matrix(30, 5, 13);
        let y: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let cfg = ForestConfig {
            n_trees: 8,
            ..ForestConfig::regression(31)
        };
        let model = fit(&x, &y, &cfg).unwrap();
        let back = RandomForest::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
