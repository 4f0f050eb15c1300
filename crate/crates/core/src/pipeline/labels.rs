//! Labeling rules: nominal capacity, cycle life, knee detection, and the
//! ΔQ(V) baseline feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{resample_cycle, ResampleConfig};
use crate::sim::CellHistory;
use crate::util::least_squares_slope;

/// Lifespan labeling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifeLabelConfig {
    /// Cycles averaged into the nominal capacity.
    pub nominal_window: usize,
    /// End of life at this fraction of nominal capacity.
    pub eol_fraction: f64,
    /// Early-cycle feature window (cycles fed to the model).
    pub early_window: usize,
    /// Cells whose life is below this many cycles are excluded.
    pub min_cycles: usize,
}

impl Default for LifeLabelConfig {
    fn default() -> Self {
        LifeLabelConfig {
            nominal_window: 5,
            eol_fraction: 0.8,
            early_window: 50,
            min_cycles: 50,
        }
    }
}

/// Life label: the first cycle below the end-of-life threshold, or
/// censored when the history ends first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleLife {
    Life(usize),
    Censored,
}

/// Nominal capacity: arithmetic mean of the final discharge capacities of
/// the first `window` cycles.
pub fn nominal_capacity(history: &CellHistory, window: usize) -> Result<f64> {
    if history.cycles.len() < window {
        return Err(Error::cell(
            history.cell_id.clone(),
            format!(
                "needs {} cycles for the nominal capacity, has {}",
                window,
                history.cycles.len()
            ),
        ));
    }
    let sum: f64 = history.cycles[..window]
        .iter()
        .map(|c| c.discharge.final_q())
        .sum();
    Ok(sum / window as f64)
}

/// First cycle whose discharge capacity is strictly below
/// `eol_fraction × nominal`; `Censored` when no cycle crosses before the
/// history ends.
pub fn cycle_life(history: &CellHistory, cfg: &LifeLabelConfig) -> Result<CycleLife> {
    let nominal = nominal_capacity(history, cfg.nominal_window)?;
    let threshold = cfg.eol_fraction * nominal;
    for cycle in &history.cycles {
        if cycle.discharge.final_q() < threshold {
            return Ok(CycleLife::Life(cycle.cycle_index));
        }
    }
    Ok(CycleLife::Censored)
}

/// Knee-detection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeMode {
    /// Knee when the steepest interval decay slope exceeds the threshold.
    MaxSlope,
    /// Knee when the largest increase between consecutive interval decay
    /// slopes exceeds the threshold.
    MaxSlopeChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeConfig {
    /// Cycles per interval.
    pub interval: usize,
    /// Decision threshold, Ah per cycle.
    pub threshold: f64,
    pub mode: KneeMode,
}

impl Default for KneeConfig {
    fn default() -> Self {
        KneeConfig {
            interval: 50,
            threshold: 0.0005,
            mode: KneeMode::MaxSlopeChange,
        }
    }
}

/// Detect a knee in the capacity fade curve. Returns the flag plus the
/// per-interval decay slopes (least-squares fits over consecutive full
/// windows; decay renders as positive numbers).
pub fn knee_label(history: &CellHistory, cfg: &KneeConfig) -> Result<(bool, Vec<f64>)> {
    if cfg.interval < 2 {
        return Err(Error::invalid("knee interval must be >= 2 cycles"));
    }
    let caps = history.discharge_capacities();
    let n_windows = caps.len() / cfg.interval;
    if n_windows < 2 {
        return Err(Error::cell(
            history.cell_id.clone(),
            format!(
                "needs at least 2 full {}-cycle intervals, has {} cycles",
                cfg.interval,
                caps.len()
            ),
        ));
    }
    let mut slopes = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let lo = w * cfg.interval;
        let hi = lo + cfg.interval;
        let xs: Vec<f64> = (lo..hi).map(|k| (k + 1) as f64).collect();
        slopes.push(-least_squares_slope(&xs, &caps[lo..hi]));
    }
    let knee = match cfg.mode {
        KneeMode::MaxSlope => slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            > cfg.threshold,
        KneeMode::MaxSlopeChange => slopes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
            > cfg.threshold,
    };
    Ok((knee, slopes))
}

/// ΔQ(V): difference between the discharge capacity-vs-voltage curves of
/// cycles `j` and `i` (1-based), on the uniform voltage grid of `cfg`.
/// NaN where either curve is undefined.
pub fn delta_q_feature(
    history: &CellHistory,
    cycle_i: usize,
    cycle_j: usize,
    cfg: &ResampleConfig,
) -> Result<Vec<f64>> {
    let fetch = |idx: usize| -> Result<&crate::sim::CycleRecord> {
        history
            .cycles
            .iter()
            .find(|c| c.cycle_index == idx)
            .ok_or_else(|| {
                Error::cell(history.cell_id.clone(), format!("cycle {} missing", idx))
            })
    };
    let a = resample_cycle(fetch(cycle_i)?, cfg)
        .map_err(|e| Error::cell(history.cell_id.clone(), e.to_string()))?;
    let b = resample_cycle(fetch(cycle_j)?, cfg)
        .map_err(|e| Error::cell(history.cell_id.clone(), e.to_string()))?;
    Ok(b.discharge
        .qv
        .iter()
        .zip(&a.discharge.qv)
        .map(|(qj, qi)| qj - qi)
        .collect())
}

/// Filter a dataset for lifespan training: drop censored cells and cells
/// whose life is below `min_cycles`. Returns `(cell_id, life)` pairs plus
/// the excluded cells with reasons; counts always reconcile with the
/// input.
pub fn filter_usable(
    histories: &[CellHistory],
    cfg: &LifeLabelConfig,
) -> Result<(Vec<(String, usize)>, Vec<(String, String)>)> {
    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    for h in histories {
        match cycle_life(h, cfg) {
            Ok(CycleLife::Life(n)) if n >= cfg.min_cycles => {
                usable.push((h.cell_id.clone(), n));
            }
            Ok(CycleLife::Life(n)) => {
                excluded.push((h.cell_id.clone(), format!("life {} below {}", n, cfg.min_cycles)));
            }
            Ok(CycleLife::Censored) => {
                excluded.push((h.cell_id.clone(), "censored".to_string()));
            }
            Err(e) => {
                excluded.push((h.cell_id.clone(), e.to_string()));
            }
        }
    }
    Ok((usable, excluded))
}
