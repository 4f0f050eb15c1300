//! K-means (Lloyd) clustering with k-means++ initialization, an inertia
//! curve, and an elbow helper.
//!
//! Distances are squared Euclidean in raw units (no standardization).
//! Fits are deterministic per seed; initialization sensitivity is handled
//! by best-of-N restarts.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::derive_seed;

/// A fitted K-means model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of every point to its centroid.
    pub inertia: f64,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub n_iter: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen one.
fn kmeanspp_init(x: &[Vec<f64>], k: usize, rng: &mut StdRng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(x[rng.random_range(0..x.len())].clone());
    let mut d2: Vec<f64> = x.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; pick uniformly.
            rng.random_range(0..x.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut idx = x.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centroids.push(x[next].clone());
        for (i, p) in x.iter().enumerate() {
            let d = dist2(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// One seeded k-means fit: k-means++ initialization, then Lloyd iterations
/// until the assignment fixpoint or an inertia change below `tol`. An empty
/// cluster is re-seeded to the point farthest from its current centroid.
///
/// ```
/// use cyclekit::cluster::kmeans_fit;
///
/// let points = vec![
///     vec![0.0, 0.1], vec![0.1, 0.0],
///     vec![9.0, 9.1], vec![9.1, 9.0],
/// ];
/// let model = kmeans_fit(&points, 2, 7, 100, 1e-9).unwrap();
/// assert_eq!(model.assignments[0], model.assignments[1]);
/// assert_ne!(model.assignments[0], model.assignments[2]);
/// ```
pub fn kmeans_fit(
    x: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if x.len() < k {
        return Err(Error::invalid(format!(
            "need at least k={} rows, got {}",
            k,
            x.len()
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("ragged input rows"));
    }
    if x.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite value in clustering input"));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(x, k, &mut rng);
    let mut assignments = vec![0usize; x.len()];
    let mut prev_inertia = f64::INFINITY;
    let mut n_iter = 0;

    for iter in 0..max_iter.max(1) {
        n_iter = iter + 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in x.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            inertia += d;
        }
        debug_assert!(
            inertia <= prev_inertia + 1e-9 * (1.0 + prev_inertia.abs()),
            "Lloyd inertia increased: {} -> {}",
            prev_inertia,
            inertia
        );

        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in x.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed to the point farthest from its assigned centroid.
                let far = (0..x.len())
                    .max_by(|&a, &b| {
                        let da = dist2(&x[a], &centroids[assignments[a]]);
                        let db = dist2(&x[b], &centroids[assignments[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[j] = x[far].clone();
                assignments[far] = j;
                changed = true;
            } else {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }

        let done = !changed || (prev_inertia - inertia).abs() < tol;
        prev_inertia = inertia;
        if done {
            break;
        }
    }

    // Final consistent assignment/inertia against the converged centroids.
    let mut inertia = 0.0;
    for (i, p) in x.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        assignments[i] = j;
        inertia += d;
    }

    Ok(KMeansModel {
        k,
        centroids,
        inertia,
        assignments,
        seed,
        n_iter,
    })
}

/// Best of `restarts` seeded fits (minimum inertia wins; ties keep the
/// earliest restart).
pub fn kmeans_best_of(
    x: &[Vec<f64>],
    k: usize,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let mut best: Option<KMeansModel> = None;
    for r in 0..restarts.max(1) {
        let model = kmeans_fit(x, k, derive_seed(seed, r as u64), max_iter, tol)?;
        if best.as_ref().map_or(true, |b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

/// Inertia as a function of k (best of 10 restarts per k).
pub fn inertia_curve(x: &[Vec<f64>], ks: &[usize], seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut curve = Vec::with_capacity(ks.len());
    for &k in ks {
        let model = kmeans_best_of(x, k, 10, derive_seed(seed, k as u64), 200, 1e-10)?;
        curve.push((k, model.inertia));
    }
    Ok(curve)
}

/// Suggest k as the arg-max of the second difference of the inertia curve.
/// Needs at least three points; this is a suggestion, not a decision.
pub fn elbow_pick(curve: &[(usize, f64)]) -> Option<usize> {
    if curve.len() < 3 {
        return None;
    }
    let mut best_k = curve[1].0;
    let mut best = f64::NEG_INFINITY;
    for w in curve.windows(3) {
        let d2 = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if d2 > best {
            best = d2;
            best_k = w[1].0;
        }
    }
    Some(best_k)
}
