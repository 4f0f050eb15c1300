//! Gaussian-emission hidden Markov model: expectation-maximization fit,
//! forward log-likelihood, and autoregressive sampling.
//!
//! The forward/backward passes use per-step scaling (with a per-step
//! log-density shift), so likelihoods stay finite for traces of 10⁵
//! samples and beyond.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::error::{Error, Result};
use crate::util::derive_seed;

use super::PowerTrace;

/// Hidden Markov model with one Gaussian emission per state.
///
/// `transition` is row-major (`transition[i * n_states + j]` is the
/// probability of moving from state `i` to state `j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub n_states: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<f64>,
    /// Per-state emission mean, W.
    pub means: Vec<f64>,
    /// Per-state emission variance, W².
    pub variances: Vec<f64>,
}

impl GaussianHmm {
    pub fn trans(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.n_states + j]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n == 0 {
            return Err(Error::invalid("model must have at least one state"));
        }
        if self.initial.len() != n
            || self.transition.len() != n * n
            || self.means.len() != n
            || self.variances.len() != n
        {
            return Err(Error::invalid("model dimensions inconsistent"));
        }
        let tol = 1e-9;
        let init_sum: f64 = self.initial.iter().sum();
        if (init_sum - 1.0).abs() > tol || self.initial.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!(
                "initial distribution must sum to 1, sums to {}",
                init_sum
            )));
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| self.trans(i, j)).sum();
            if (row_sum - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "transition row {} sums to {}",
                    i, row_sum
                )));
            }
            if (0..n).any(|j| self.trans(i, j) < 0.0) {
                return Err(Error::invalid(format!("negative entry in transition row {}", i)));
            }
        }
        if self.variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GaussianHmm = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Knobs of the EM fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_states: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the total log-likelihood improves by less than this.
    pub tol: f64,
    /// Lower bound on emission variances, W²; prevents collapse on
    /// repeated values.
    pub variance_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_states: 8,
            seed: 0,
            max_iter: 200,
            tol: 1e-6,
            variance_floor: 1e-6,
        }
    }
}

/// Fit result: the model plus diagnostics.
#[derive(Debug, Clone)]
pub struct HmmFit {
    pub model: GaussianHmm,
    /// Log-likelihood after each EM iteration (non-decreasing).
    pub loglik_history: Vec<f64>,
    /// Whether any emission variance was clipped at the floor.
    pub variance_floor_applied: bool,
    pub n_iter: usize,
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + core::f64::consts::TAU.ln())
}

/// Per-step emission densities, shifted so the largest per-step value is 1.
/// Returns the matrix of shifted densities and the per-step log shifts.
fn shifted_densities(model: &GaussianHmm, obs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = model.n_states;
    let mut dens = vec![0.0; obs.len() * n];
    let mut shifts = vec![0.0; obs.len()];
    for (t, &x) in obs.iter().enumerate() {
        let row = &mut dens[t * n..(t + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            row[i] = log_normal_pdf(x, model.means[i], model.variances[i]);
            max = max.max(row[i]);
        }
        shifts[t] = max;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
        }
    }
    (dens, shifts)
}

struct ForwardBackward {
    /// Scaled forward variables, row per step.
    alpha: Vec<f64>,
    /// Scaled backward variables, row per step.
    beta: Vec<f64>,
    /// Per-step scaling constants of the shifted densities.
    scale: Vec<f64>,
    loglik: f64,
}

fn forward_backward(model: &GaussianHmm, obs: &[f64]) -> Result<ForwardBackward> {
    let n = model.n_states;
    let t_len = obs.len();
    let (dens, shifts) = shifted_densities(model, obs);
    let mut alpha = vec![0.0; t_len * n];
    let mut scale = vec![0.0; t_len];

    for i in 0..n {
        alpha[i] = model.initial[i] * dens[i];
    }
    scale[0] = alpha[..n].iter().sum();
    if scale[0] <= 0.0 {
        return Err(Error::invalid("forward pass underflow at step 0"));
    }
    for i in 0..n {
        alpha[i] /= scale[0];
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        let cur = &mut cur[..n];
        for (j, c) in cur.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &p) in prev.iter().enumerate() {
                acc += p * model.trans(i, j);
            }
            *c = acc * dens[t * n + j];
        }
        scale[t] = cur.iter().sum();
        if scale[t] <= 0.0 {
            return Err(Error::invalid(format!("forward pass underflow at step {}", t)));
        }
        for c in cur.iter_mut() {
            *c /= scale[t];
        }
    }

    let mut beta = vec![0.0; t_len * n];
    for i in 0..n {
        beta[(t_len - 1) * n + i] = 1.0;
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += model.trans(i, j) * dens[(t + 1) * n + j] * beta[(t + 1) * n + j];
            }
            beta[t * n + i] = acc / scale[t + 1];
        }
    }

    let loglik = scale.iter().map(|c| c.ln()).sum::<f64>() + shifts.iter().sum::<f64>();
    Ok(ForwardBackward {
        alpha,
        beta,
        scale,
        loglik,
    })
}

/// Forward-algorithm log-likelihood of a trace under a model.
pub fn loglik(model: &GaussianHmm, trace: &PowerTrace) -> Result<f64> {
    model.validate()?;
    trace.validate()?;
    Ok(forward_backward(model, &trace.powers())?.loglik)
}

/// Fit a Gaussian-emission HMM to a power trace by expectation-maximization.
///
/// Initialization is k-means++ (via a short seeded k-means run) on the
/// observations for means and variances, with uniform-plus-diagonal-boost
/// transitions. The log-likelihood is non-decreasing across iterations;
/// the fit is bit-reproducible given the seed.
pub fn fit_hmm(trace: &PowerTrace, opts: &FitOptions) -> Result<HmmFit> {
    trace.validate()?;
    if opts.n_states == 0 {
        return Err(Error::invalid("n_states must be >= 1"));
    }
    let obs = trace.powers();
    if obs.len() < opts.n_states {
        return Err(Error::invalid(format!(
            "trace length {} is below n_states {}",
            obs.len(),
            opts.n_states
        )));
    }
    let n = opts.n_states;
    let mut floor_applied = false;

    // Initial means/variances from 1-D k-means; states sorted by mean so
    // initialization is canonical.
    let points: Vec<Vec<f64>> = obs.iter().map(|&x| vec![x]).collect();
    let km = cluster::kmeans_fit(&points, n, derive_seed(opts.seed, 0x6b), 50, 1e-10)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| km.centroids[a][0].partial_cmp(&km.centroids[b][0]).unwrap());

    let mut means = vec![0.0; n];
    let mut variances = vec![0.0; n];
    let mut initial = vec![0.0; n];
    for (slot, &cl) in order.iter().enumerate() {
        means[slot] = km.centroids[cl][0];
        let members: Vec<f64> = obs
            .iter()
            .zip(&km.assignments)
            .filter(|(_, &a)| a == cl)
            .map(|(&x, _)| x)
            .collect();
        let var = if members.is_empty() {
            0.0
        } else {
            let m = means[slot];
            members.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / members.len() as f64
        };
        if var < opts.variance_floor {
            floor_applied = true;
        }
        variances[slot] = var.max(opts.variance_floor);
        initial[slot] = members.len() as f64 / obs.len() as f64;
    }
    let init_sum: f64 = initial.iter().sum();
    for p in initial.iter_mut() {
        *p /= init_sum;
    }

    // Uniform transitions with a small diagonal boost.
    let boost = 0.1;
    let mut transition = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let raw = 1.0 / n as f64 + if i == j { boost } else { 0.0 };
            transition[i * n + j] = raw / (1.0 + boost);
        }
    }

    let mut model = GaussianHmm {
        n_states: n,
        initial,
        transition,
        means,
        variances,
    };

    let mut history = Vec::new();
    let mut n_iter = 0;
    for iter in 0..opts.max_iter {
        n_iter = iter + 1;
        let fb = forward_backward(&model, &obs)?;
        history.push(fb.loglik);
        if iter > 0 {
            let prev = history[iter - 1];
            debug_assert!(
                fb.loglik >= prev - 1e-8 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {} -> {}",
                prev,
                fb.loglik
            );
            if (fb.loglik - prev).abs() < opts.tol {
                break;
            }
        }

        // M-step.
        let t_len = obs.len();
        let (dens, _) = shifted_densities(&model, &obs);
        let mut gamma_sum = vec![0.0; n];
        let mut gamma_sum_tless = vec![0.0; n];
        let mut mean_num = vec![0.0; n];
        let mut trans_num = vec![0.0; n * n];
        let mut gamma0 = vec![0.0; n];

        let mut gammas = vec![0.0; t_len * n];
        for t in 0..t_len {
            for i in 0..n {
                gammas[t * n + i] = fb.alpha[t * n + i] * fb.beta[t * n + i];
            }
        }
        for i in 0..n {
            gamma0[i] = gammas[i];
        }
        for t in 0..t_len {
            for i in 0..n {
                let g = gammas[t * n + i];
                gamma_sum[i] += g;
                mean_num[i] += g * obs[t];
                if t + 1 < t_len {
                    gamma_sum_tless[i] += g;
                }
            }
        }
        for t in 0..t_len - 1 {
            for i in 0..n {
                let a = fb.alpha[t * n + i];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    trans_num[i * n + j] += a
                        * model.trans(i, j)
                        * dens[(t + 1) * n + j]
                        * fb.beta[(t + 1) * n + j]
                        / fb.scale[t + 1];
                }
            }
        }

        let eps = 1e-300;
        for i in 0..n {
            if gamma_sum[i] > eps {
                model.means[i] = mean_num[i] / gamma_sum[i];
            }
        }
        for i in 0..n {
            if gamma_sum[i] > eps {
                let mut var_num = 0.0;
                for t in 0..t_len {
                    let d = obs[t] - model.means[i];
                    var_num += gammas[t * n + i] * d * d;
                }
                let var = var_num / gamma_sum[i];
                if var < opts.variance_floor {
                    floor_applied = true;
                }
                model.variances[i] = var.max(opts.variance_floor);
            }
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| trans_num[i * n + j]).sum();
            if row_sum > eps {
                for j in 0..n {
                    model.transition[i * n + j] = trans_num[i * n + j] / row_sum;
                }
            } else {
                // State never visited before the last step; keep a valid row.
                for j in 0..n {
                    model.transition[i * n + j] = 1.0 / n as f64;
                }
            }
            if gamma_sum_tless[i] <= eps && n > 1 {
                floor_applied = true;
            }
        }
        let g0_sum: f64 = gamma0.iter().sum();
        if g0_sum > eps {
            for i in 0..n {
                model.initial[i] = gamma0[i] / g0_sum;
            }
        }

        // Exact renormalization so row/initial sums hold to 1e-9 after
        // every step.
        renormalize(&mut model);
    }

    model.validate()?;
    Ok(HmmFit {
        model,
        loglik_history: history,
        variance_floor_applied: floor_applied,
        n_iter,
    })
}

fn renormalize(model: &mut GaussianHmm) {
    let n = model.n_states;
    let s: f64 = model.initial.iter().sum();
    for p in model.initial.iter_mut() {
        *p /= s;
    }
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| model.transition[i * n + j]).sum();
        for j in 0..n {
            model.transition[i * n + j] /= row_sum;
        }
    }
}

fn categorical(weights: &[f64], rng: &mut StdRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

/// Sample a power trace of `duration_s` seconds at `step_s` resolution:
/// an initial hidden state from the initial distribution, then transitions
/// through the chain with one Gaussian emission per step. Deterministic
/// per seed. Raw emissions may stray outside `[0, cap]`; post-processing
/// clips them.
pub fn sample_protocol(
    model: &GaussianHmm,
    duration_s: f64,
    step_s: f64,
    seed: u64,
) -> Result<PowerTrace> {
    model.validate()?;
    if !(duration_s > 0.0) || !(step_s > 0.0) {
        return Err(Error::invalid("duration and step must be positive"));
    }
    let n_steps = (duration_s / step_s).ceil() as usize;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut state = categorical(&model.initial, &mut rng);
    let mut samples = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let dist = Normal::new(model.means[state], model.variances[state].sqrt())
            .map_err(|e| Error::invalid(format!("bad emission parameters: {}", e)))?;
        let power = dist.sample(&mut rng);
        samples.push((k as f64 * step_s, power));
        let row = &model.transition[state * model.n_states..(state + 1) * model.n_states];
        state = categorical(row, &mut rng);
    }
    PowerTrace::new(samples)
}
