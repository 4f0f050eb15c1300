//! Plan execution over cell histories, plus the naive per-expression
//! interpreter used as its oracle.

use rayon::prelude::*;

use crate::dsl::{CycleSelector, EvalPlan, FeatureExpr, FeatureNode};
use crate::error::{Error, Result};
use crate::sim::CellHistory;

use super::matrix::FeatureMatrix;
use super::nanstats::aggregate;
use super::resample::{group_cycles, resample_cycle, segment_agg, ResampleConfig, ResampledCycle};

/// Resample the first `n` cycles of a history.
pub fn resample_history(
    history: &CellHistory,
    n: usize,
    cfg: &ResampleConfig,
) -> Result<Vec<ResampledCycle>> {
    if history.cycles.len() < n {
        return Err(Error::cell(
            history.cell_id.clone(),
            format!("has {} cycles; {} required", history.cycles.len(), n),
        ));
    }
    history.cycles[..n]
        .iter()
        .map(|rec| {
            resample_cycle(rec, cfg)
                .map_err(|e| Error::cell(history.cell_id.clone(), e.to_string()))
        })
        .collect()
}

/// Execute a compiled plan over the first `n` cycles of one cell.
///
/// Stage 1 computes per-cycle descriptors, stage 2 applies the outer
/// aggregator over each cycle group (difference selectors subtract two
/// group aggregates), stage 3 applies the activator. The output vector is
/// in plan column order.
pub fn evaluate(
    plan: &EvalPlan,
    history: &CellHistory,
    n: usize,
    cfg: &ResampleConfig,
) -> Result<Vec<f64>> {
    let resampled = resample_history(history, n, cfg)?;
    evaluate_resampled(plan, &resampled, n)
}

fn evaluate_resampled(
    plan: &EvalPlan,
    resampled: &[ResampledCycle],
    n: usize,
) -> Result<Vec<f64>> {
    let groups = group_cycles(n, plan.cycle_groups)?;

    // Stage 1: descriptor value per (cycle, node).
    let n_desc = plan.stage1.len();
    let mut descriptors = vec![0.0f64; n * n_desc];
    for (c, cycle) in resampled.iter().enumerate() {
        for (d, node) in plan.stage1.iter().enumerate() {
            let arr = cycle.signal(node.signal, node.direction);
            descriptors[c * n_desc + d] = segment_agg(arr, node.segment, plan.segments, node.inner);
        }
    }

    // Stage 2: outer aggregate of each descriptor over each used group.
    let mut group_values = Vec::with_capacity(plan.stage2.len());
    let mut scratch = Vec::new();
    for node in &plan.stage2 {
        let range = groups[node.group as usize - 1].clone();
        scratch.clear();
        scratch.extend(range.map(|c| descriptors[c * n_desc + node.descriptor]));
        group_values.push(aggregate(node.outer, &scratch));
    }

    // Stage 3: combine and activate.
    let out = plan
        .features
        .iter()
        .map(|f| match *f {
            FeatureNode::Single { node, activator } => activator.apply(group_values[node]),
            FeatureNode::Diff {
                left,
                right,
                activator,
            } => activator.apply(group_values[left] - group_values[right]),
        })
        .collect();
    Ok(out)
}

/// Evaluate a whole dataset into a feature matrix (rows in dataset order,
/// cells processed in parallel).
pub fn evaluate_matrix(
    plan: &EvalPlan,
    histories: &[CellHistory],
    n: usize,
    cfg: &ResampleConfig,
) -> Result<FeatureMatrix> {
    let rows: Result<Vec<Vec<f64>>> = histories
        .par_iter()
        .map(|h| evaluate(plan, h, n, cfg))
        .collect();
    let rows = rows?;
    let mut matrix = FeatureMatrix::new(plan.names.clone());
    for (history, row) in histories.iter().zip(rows) {
        matrix.push_row(history.cell_id.clone(), row)?;
    }
    Ok(matrix)
}

/// Naive interpreter: evaluates each expression independently from the
/// resampled signals, bypassing the plan's node sharing. Oracle for plan
/// evaluation.
pub fn evaluate_naive(
    exprs: &[FeatureExpr],
    history: &CellHistory,
    n: usize,
    cfg: &ResampleConfig,
) -> Result<Vec<f64>> {
    let resampled = resample_history(history, n, cfg)?;
    exprs
        .iter()
        .map(|e| evaluate_one_naive(e, &resampled, n))
        .collect()
}

fn evaluate_one_naive(expr: &FeatureExpr, resampled: &[ResampledCycle], n: usize) -> Result<f64> {
    expr.validate()?;
    let groups = group_cycles(n, expr.selector.total())?;
    let descriptor: Vec<f64> = resampled
        .iter()
        .map(|cycle| {
            let arr = cycle.signal(expr.signal, expr.direction);
            segment_agg(arr, expr.segment.index, expr.segment.total, expr.inner)
        })
        .collect();
    let group_agg = |g: u32| -> f64 {
        let vals: Vec<f64> = groups[g as usize - 1]
            .clone()
            .map(|c| descriptor[c])
            .collect();
        aggregate(expr.outer, &vals)
    };
    let raw = match expr.selector {
        CycleSelector::Single { index, .. } => group_agg(index),
        CycleSelector::Diff { first, second, .. } => group_agg(first) - group_agg(second),
    };
    Ok(expr.activator.apply(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{compile, enumerate_space, parse, SpaceConfig};
    use crate::sim::{CycleRecord, PhaseRecord};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// History of `n` synthetic cycles; `vary` perturbs each cycle so that
    /// cycle groups differ.
    fn synthetic_history(n: usize, vary: f64, seed: u64) -> CellHistory {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut cycles = Vec::new();
        for c in 0..n {
            let len = 40 + (c % 3) * 7;
            let drift = vary * c as f64;
            let mut d = PhaseRecord::default();
            let mut ch = PhaseRecord::default();
            for k in 0..len {
                let f = k as f64 / (len - 1) as f64;
                d.t.push(k as f64 * 10.0);
                d.v.push(4.15 - f * 1.3 - drift * 0.01 + rng.random::<f64>() * 0.002);
                d.q.push(2.1 * f * (1.0 - drift * 0.002));
                d.i.push(2.0 + rng.random::<f64>() * 0.2);
                d.e.push(7.2 * f);
                d.w.push(7.0 + rng.random::<f64>() * 0.4);
                ch.t.push(k as f64 * 8.0);
                ch.v.push(3.1 + f * 1.05 + drift * 0.003);
                ch.q.push(2.0 * f);
                ch.i.push(-(2.5 - f));
                ch.e.push(6.8 * f);
                ch.w.push(-(9.0 - 3.0 * f));
            }
            cycles.push(CycleRecord {
                cycle_index: c + 1,
                discharge: d,
                charge: ch,
                temperature_c: 30.0,
                protocol_id: format!("p{}", c),
            });
        }
        CellHistory {
            cell_id: format!("syn-{}", seed),
            params: crate::sim::CellParams::default(),
            cycles,
            end_reason: crate::sim::EndReason::MaxCycles,
        }
    }

    /// History whose cycles are all bit-identical.
    fn identical_history(n: usize) -> CellHistory {
        let mut h = synthetic_history(1, 0.0, 5);
        let template = h.cycles[0].clone();
        h.cycles = (0..n)
            .map(|c| CycleRecord {
                cycle_index: c + 1,
                ..template.clone()
            })
            .collect();
        h
    }

    #[test]
    fn identical_cycles_make_diff_features_zero() {
        let history = identical_history(14);
        let cfg = SpaceConfig {
            cycle_groups: 7,
            segments: 4,
            early_cycles: 14,
            ..Default::default()
        };
        let space = enumerate_space(&cfg).unwrap();
        let plan = compile(&space).unwrap();
        let values = evaluate(&plan, &history, 14, &ResampleConfig::default()).unwrap();
        for (expr, &v) in space.iter().zip(&values) {
            if matches!(expr.selector, crate::dsl::CycleSelector::Diff { .. }) && !v.is_nan() {
                assert_eq!(v, 0.0, "{} = {}", expr, v);
            }
        }
    }

    #[test]
    fn abs_column_equals_abs_of_identity_column() {
        let history = synthetic_history(10, 1.0, 9);
        let cfg = SpaceConfig {
            cycle_groups: 5,
            segments: 4,
            early_cycles: 10,
            ..Default::default()
        };
        let space = enumerate_space(&cfg).unwrap();
        let plan = compile(&space).unwrap();
        let values = evaluate(&plan, &history, 10, &ResampleConfig::default()).unwrap();
        // Enumeration emits identity/abs adjacent (activator varies fastest).
        for pair in space.chunks(2).zip(values.chunks(2)) {
            let (exprs, vals) = pair;
            assert_eq!(exprs[0].activator, crate::dsl::Activator::Identity);
            assert_eq!(exprs[1].activator, crate::dsl::Activator::Abs);
            if vals[0].is_nan() {
                assert!(vals[1].is_nan());
            } else {
                assert_eq!(vals[1], vals[0].abs());
            }
        }
    }

    #[test]
    fn plan_matches_naive_interpreter_on_random_cells() {
        let cfg = SpaceConfig {
            cycle_groups: 4,
            segments: 3,
            early_cycles: 9,
            ..Default::default()
        };
        let space = enumerate_space(&cfg).unwrap();
        let plan = compile(&space).unwrap();
        for seed in 0..3u64 {
            let history = synthetic_history(9, 0.7, seed);
            let fast = evaluate(&plan, &history, 9, &ResampleConfig::default()).unwrap();
            let slow = evaluate_naive(&space, &history, 9, &ResampleConfig::default()).unwrap();
            assert_eq!(fast.len(), slow.len());
            for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
                if a.is_nan() {
                    assert!(b.is_nan(), "{}: {} vs {}", space[k], a, b);
                } else {
                    assert!((a - b).abs() <= 1e-12, "{}: {} vs {}", space[k], a, b);
                }
            }
        }
    }

    #[test]
    fn matrix_rows_follow_dataset_order() {
        let h1 = synthetic_history(8, 0.5, 1);
        let h2 = synthetic_history(8, 0.5, 2);
        let expr = parse("identity(nanmean(Cycle(1/2))[nanmean(VQ_d(1/2))])").unwrap();
        let plan = compile(&[expr]).unwrap();
        let cfg = ResampleConfig::default();
        let fwd = evaluate_matrix(&plan, &[h1.clone(), h2.clone()], 8, &cfg).unwrap();
        let rev = evaluate_matrix(&plan, &[h2.clone(), h1.clone()], 8, &cfg).unwrap();
        assert_eq!(fwd.cell_ids()[0], h1.cell_id);
        assert_eq!(rev.cell_ids()[1], h1.cell_id);
        assert_eq!(fwd.row(0), rev.row(1));
        assert_eq!(fwd.row(1), rev.row(0));
        // Single cell equals a direct evaluate call.
        let single = evaluate(&plan, &h1, 8, &cfg).unwrap();
        assert_eq!(fwd.row(0), single.as_slice());
    }

    #[test]
    fn short_history_is_a_cell_error() {
        let history = synthetic_history(5, 0.5, 3);
        let expr = parse("identity(nanmean(Cycle(1/2))[nanmean(VQ_d(1/2))])").unwrap();
        let plan = compile(&[expr]).unwrap();
        let err = evaluate(&plan, &history, 50, &ResampleConfig::default()).unwrap_err();
        assert!(err.to_string().contains("syn-3"), "{}", err);
    }
}
