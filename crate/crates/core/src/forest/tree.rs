//! Single decision tree: recursive best-split growth and prediction.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{DenseColumns, ForestConfig, Task};

/// Tree node. Rows with `value <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Mean target (regression).
        value: f64,
        /// Class counts (classification; empty for regression).
        counts: Vec<usize>,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn walk(&self, row: &[f64]) -> &Node {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self.walk(row) {
            Node::Leaf { value, .. } => *value,
            _ => unreachable!(),
        }
    }

    pub fn predict_counts(&self, row: &[f64]) -> &[usize] {
        match self.walk(row) {
            Node::Leaf { counts, .. } => counts,
            _ => unreachable!(),
        }
    }
}

struct Grower<'a> {
    columns: &'a DenseColumns,
    y: &'a [f64],
    n_classes: usize,
    config: &'a ForestConfig,
    rng: StdRng,
    nodes: Vec<Node>,
    /// Impurity decrease accumulated per feature, weighted by the node's
    /// share of the training rows.
    importance: Vec<f64>,
    n_total: usize,
    /// Scratch: class counts.
    class_buf: Vec<usize>,
}

/// Candidate split found for one node.
struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn variance(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq / n - (sum / n) * (sum / n)).max(0.0)
}

fn gini(counts: &[usize], n: f64) -> f64 {
    let mut acc = 0.0;
    for &c in counts {
        let p = c as f64 / n;
        acc += p * p;
    }
    1.0 - acc
}

impl<'a> Grower<'a> {
    fn node_impurity(&mut self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        match self.config.task {
            Task::Regression => {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for &r in rows {
                    sum += self.y[r];
                    sum_sq += self.y[r] * self.y[r];
                }
                variance(sum, sum_sq, n)
            }
            Task::Classification => {
                self.class_buf.iter_mut().for_each(|c| *c = 0);
                for &r in rows {
                    self.class_buf[self.y[r] as usize] += 1;
                }
                gini(&self.class_buf, n)
            }
        }
    }

    fn make_leaf(&mut self, rows: &[usize]) -> usize {
        let node = match self.config.task {
            Task::Regression => {
                let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
                Node::Leaf {
                    value: mean,
                    counts: Vec::new(),
                }
            }
            Task::Classification => {
                let mut counts = vec![0usize; self.n_classes];
                for &r in rows {
                    counts[self.y[r] as usize] += 1;
                }
                Node::Leaf { value: 0.0, counts }
            }
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Distinct feature indices, ascending, sampled without replacement.
    fn sample_features(&mut self, k: usize) -> Vec<usize> {
        let p = self.columns.cols.len() / self.columns.n_rows;
        if k >= p {
            return (0..p).collect();
        }
        let mut chosen = std::collections::HashSet::with_capacity(k * 2);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let f = self.rng.random_range(0..p);
            if chosen.insert(f) {
                out.push(f);
            }
        }
        out.sort_unstable();
        out
    }

    /// Best split over one feature; `None` when no threshold satisfies the
    /// leaf-size constraint with a positive impurity decrease.
    fn best_split_on(&mut self, rows: &[usize], feature: usize, parent_impurity: f64) -> Option<Split> {
        let col = self.columns.column(feature);
        let n = rows.len();
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap());

        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut best: Option<Split> = None;

        match self.config.task {
            Task::Regression => {
                let total_sum: f64 = order.iter().map(|&r| self.y[r]).sum();
                let total_sq: f64 = order.iter().map(|&r| self.y[r] * self.y[r]).sum();
                let mut left_sum = 0.0;
                let mut left_sq = 0.0;
                for i in 0..n - 1 {
                    let r = order[i];
                    left_sum += self.y[r];
                    left_sq += self.y[r] * self.y[r];
                    if col[order[i]] == col[order[i + 1]] {
                        continue;
                    }
                    let nl = i + 1;
                    let nr = n - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let var_l = variance(left_sum, left_sq, nl as f64);
                    let var_r = variance(total_sum - left_sum, total_sq - left_sq, nr as f64);
                    let child = (nl as f64 * var_l + nr as f64 * var_r) / n as f64;
                    let decrease = parent_impurity - child;
                    if decrease > 1e-12
                        && best.as_ref().map_or(true, |b| decrease > b.decrease)
                    {
                        best = Some(Split {
                            feature,
                            threshold: 0.5 * (col[order[i]] + col[order[i + 1]]),
                            decrease,
                        });
                    }
                }
            }
            Task::Classification => {
                let mut total = vec![0usize; self.n_classes];
                for &r in &order {
                    total[self.y[r] as usize] += 1;
                }
                let mut left = vec![0usize; self.n_classes];
                for i in 0..n - 1 {
                    left[self.y[order[i]] as usize] += 1;
                    if col[order[i]] == col[order[i + 1]] {
                        continue;
                    }
                    let nl = i + 1;
                    let nr = n - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let right: Vec<usize> =
                        total.iter().zip(&left).map(|(&t, &l)| t - l).collect();
                    let child = (nl as f64 * gini(&left, nl as f64)
                        + nr as f64 * gini(&right, nr as f64))
                        / n as f64;
                    let decrease = parent_impurity - child;
                    if decrease > 1e-12
                        && best.as_ref().map_or(true, |b| decrease > b.decrease)
                    {
                        best = Some(Split {
                            feature,
                            threshold: 0.5 * (col[order[i]] + col[order[i + 1]]),
                            decrease,
                        });
                    }
                }
            }
        }
        best
    }

    fn best_split(&mut self, rows: &[usize], parent_impurity: f64) -> Option<Split> {
        let p = self.columns.cols.len() / self.columns.n_rows;
        let k = self.config.max_features.count(p);
        let candidates = self.sample_features(k);
        let mut best: Option<Split> = None;
        for feature in candidates {
            if let Some(s) = self.best_split_on(rows, feature, parent_impurity) {
                if best.as_ref().map_or(true, |b| s.decrease > b.decrease) {
                    best = Some(s);
                }
            }
        }
        if best.is_some() || k >= p {
            return best;
        }
        // The sampled subset had no usable split; fall back to scanning all
        // features so impure nodes only become leaves when truly unsplittable.
        for feature in 0..p {
            if let Some(s) = self.best_split_on(rows, feature, parent_impurity) {
                if best.as_ref().map_or(true, |b| s.decrease > b.decrease) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn grow_node(&mut self, rows: &[usize], depth: usize) -> usize {
        let impurity = self.node_impurity(rows);
        let depth_capped = self.config.max_depth.map_or(false, |d| depth >= d);
        if rows.len() < 2 * self.config.min_samples_leaf.max(1)
            || impurity <= 1e-15
            || depth_capped
        {
            return self.make_leaf(rows);
        }
        let Some(split) = self.best_split(rows, impurity) else {
            return self.make_leaf(rows);
        };

        self.importance[split.feature] += rows.len() as f64 / self.n_total as f64 * split.decrease;

        let col = self.columns.column(split.feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| col[r] <= split.threshold);

        let here = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            counts: Vec::new(),
        });
        let left = self.grow_node(&left_rows, depth + 1);
        let right = self.grow_node(&right_rows, depth + 1);
        self.nodes[here] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        here
    }
}

/// Grow one tree from its own seed; returns the tree and its per-feature
/// impurity-decrease contributions.
pub(super) fn grow(
    columns: &DenseColumns,
    y: &[f64],
    n_classes: usize,
    config: &ForestConfig,
    seed: u64,
) -> (DecisionTree, Vec<f64>) {
    let n = columns.n_rows;
    let p = columns.cols.len() / n;
    let mut rng = StdRng::seed_from_u64(seed);
    let rows: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut grower = Grower {
        columns,
        y,
        n_classes,
        config,
        rng,
        nodes: Vec::new(),
        importance: vec![0.0; p],
        n_total: n,
        class_buf: vec![0; n_classes],
    };
    let root = grower.grow_node(&rows, 0);
    debug_assert_eq!(root, 0);
    (
        DecisionTree {
            nodes: grower.nodes,
        },
        grower.importance,
    )
}
