//! Resampling of raw phase records onto fixed-length grids.
//!
//! Seven signal families per phase:
//! - `VQ`: voltage interpolated at uniform capacity points over `[0, Q_end]`
//!   (capacity made strictly increasing by dropping non-increasing samples);
//! - `QV`: capacity interpolated on a uniform voltage grid spanning the cell
//!   window, NaN outside the observed voltage range;
//! - `V`, `I`, `E`, `W`: interpolated on a uniform time grid over
//!   `[0, t_end]`;
//! - `dVdQ`: pairwise-difference series over the raw samples,
//!   `(v[2k+1] − v[2k]) / (q[2k+1] − q[2k])`, NaN where the capacity
//!   difference is zero.

use crate::dsl::{Direction, SignalKind};
use crate::error::{Error, Result};
use crate::sim::{CycleRecord, PhaseRecord};
use crate::util::linspace;

/// Grid configuration for resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    /// Points per resampled signal.
    pub grid_len: usize,
    /// Voltage-grid lower bound (cell discharge cutoff).
    pub v_min: f64,
    /// Voltage-grid upper bound (cell charge cutoff).
    pub v_max: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            grid_len: 100,
            v_min: 2.75,
            v_max: 4.2,
        }
    }
}

/// Fixed-length signals of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledPhase {
    pub vq: Vec<f64>,
    pub qv: Vec<f64>,
    pub dvdq: Vec<f64>,
    pub v_t: Vec<f64>,
    pub i_t: Vec<f64>,
    pub e_t: Vec<f64>,
    pub w_t: Vec<f64>,
}

impl ResampledPhase {
    pub fn signal(&self, kind: SignalKind) -> &[f64] {
        match kind {
            SignalKind::Vq => &self.vq,
            SignalKind::Qv => &self.qv,
            SignalKind::DvDq => &self.dvdq,
            SignalKind::V => &self.v_t,
            SignalKind::I => &self.i_t,
            SignalKind::E => &self.e_t,
            SignalKind::W => &self.w_t,
        }
    }
}

/// Both phases of one cycle, resampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledCycle {
    pub charge: ResampledPhase,
    pub discharge: ResampledPhase,
}

impl ResampledCycle {
    pub fn signal(&self, kind: SignalKind, direction: Direction) -> &[f64] {
        match direction {
            Direction::Charge => self.charge.signal(kind),
            Direction::Discharge => self.discharge.signal(kind),
        }
    }
}

/// Interpolate `(xs, ys)` at each grid point with one forward sweep.
/// `xs` must be strictly increasing; grid points outside the span are NaN.
fn interp_grid(xs: &[f64], ys: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut seg = 0usize;
    for &x in grid {
        if x < xs[0] || x > xs[xs.len() - 1] {
            out.push(f64::NAN);
            continue;
        }
        while seg + 2 < xs.len() && xs[seg + 1] < x {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let w = (x - x0) / (x1 - x0);
        out.push(ys[seg] + w * (ys[seg + 1] - ys[seg]));
    }
    out
}

/// Keep only samples whose key strictly increases over the kept prefix.
fn strictly_increasing_by_key(keys: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ks = Vec::with_capacity(keys.len());
    let mut vs = Vec::with_capacity(values.len());
    for (&k, &v) in keys.iter().zip(values) {
        if ks.last().map_or(true, |&last| k > last) {
            ks.push(k);
            vs.push(v);
        }
    }
    (ks, vs)
}

fn resample_phase(
    phase: &PhaseRecord,
    direction: Direction,
    cfg: &ResampleConfig,
    cycle_index: usize,
) -> Result<ResampledPhase> {
    if phase.len() < 2 {
        return Err(Error::invalid(format!(
            "cycle {} {:?} phase has {} samples; need at least 2",
            cycle_index,
            direction,
            phase.len()
        )));
    }

    // VQ: V on a uniform Q grid.
    let (q_inc, v_on_q) = strictly_increasing_by_key(&phase.q, &phase.v);
    let vq = if q_inc.len() >= 2 {
        let grid = linspace(q_inc[0], *q_inc.last().unwrap(), cfg.grid_len);
        interp_grid(&q_inc, &v_on_q, &grid)
    } else {
        vec![f64::NAN; cfg.grid_len]
    };

    // QV: Q on a uniform V grid spanning the cell window. Voltage falls on
    // discharge, so that phase is reversed before deduplication.
    let (v_seq, q_seq): (Vec<f64>, Vec<f64>) = match direction {
        Direction::Charge => (phase.v.clone(), phase.q.clone()),
        Direction::Discharge => (
            phase.v.iter().rev().copied().collect(),
            phase.q.iter().rev().copied().collect(),
        ),
    };
    let (v_inc, q_on_v) = strictly_increasing_by_key(&v_seq, &q_seq);
    let qv = if v_inc.len() >= 2 {
        let grid = linspace(cfg.v_min, cfg.v_max, cfg.grid_len);
        interp_grid(&v_inc, &q_on_v, &grid)
    } else {
        vec![f64::NAN; cfg.grid_len]
    };

    // dVdQ over raw sample pairs.
    let pairs = phase.len() / 2;
    let mut dvdq = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let dv = phase.v[2 * k + 1] - phase.v[2 * k];
        let dq = phase.q[2 * k + 1] - phase.q[2 * k];
        dvdq.push(if dq == 0.0 { f64::NAN } else { dv / dq });
    }

    // Time-indexed signals on a uniform grid over the phase duration.
    let grid = linspace(phase.t[0], *phase.t.last().unwrap(), cfg.grid_len);
    let v_t = interp_grid(&phase.t, &phase.v, &grid);
    let i_t = interp_grid(&phase.t, &phase.i, &grid);
    let e_t = interp_grid(&phase.t, &phase.e, &grid);
    let w_t = interp_grid(&phase.t, &phase.w, &grid);

    Ok(ResampledPhase {
        vq,
        qv,
        dvdq,
        v_t,
        i_t,
        e_t,
        w_t,
    })
}

/// Resample both phases of a cycle.
pub fn resample_cycle(rec: &CycleRecord, cfg: &ResampleConfig) -> Result<ResampledCycle> {
    Ok(ResampledCycle {
        charge: resample_phase(&rec.charge, Direction::Charge, cfg, rec.cycle_index)?,
        discharge: resample_phase(&rec.discharge, Direction::Discharge, cfg, rec.cycle_index)?,
    })
}

/// Contiguous slice bounds of segment `index` of `total` over an array of
/// `len` elements: equal integer-division widths, remainder absorbed by the
/// last segment.
pub fn segment_bounds(len: usize, index: u32, total: u32) -> (usize, usize) {
    let base = len / total as usize;
    let lo = (index as usize - 1) * base;
    let hi = if index == total { len } else { index as usize * base };
    (lo, hi)
}

/// NaN-ignoring aggregate of one segment of an array. An empty or all-NaN
/// slice yields NaN.
pub fn segment_agg(arr: &[f64], index: u32, total: u32, agg: crate::dsl::AggKind) -> f64 {
    let (lo, hi) = segment_bounds(arr.len(), index, total);
    if lo >= hi {
        return f64::NAN;
    }
    super::nanstats::aggregate(agg, &arr[lo..hi])
}

/// Partition cycles `1..=n` into `k` contiguous groups (0-based half-open
/// index ranges): equal integer-division sizes, remainder to the last group.
pub fn group_cycles(n: usize, k: u32) -> Result<Vec<std::ops::Range<usize>>> {
    if k == 0 {
        return Err(Error::invalid("cycle-group count must be >= 1"));
    }
    if n < k as usize {
        return Err(Error::invalid(format!(
            "cannot split {} cycles into {} groups",
            n, k
        )));
    }
    let base = n / k as usize;
    let mut out = Vec::with_capacity(k as usize);
    for g in 0..k as usize {
        let lo = g * base;
        let hi = if g + 1 == k as usize { n } else { (g + 1) * base };
        out.push(lo..hi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::AggKind;
    use crate::eval::nanstats;

    fn ramp_record() -> CycleRecord {
        // Discharge: V falls linearly 4.2 → 2.75 while Q rises 0 → 2.2.
        let n = 45;
        let mut d = PhaseRecord::default();
        for k in 0..n {
            let f = k as f64 / (n - 1) as f64;
            d.t.push(k as f64 * 10.0);
            d.v.push(4.2 - f * (4.2 - 2.75));
            d.q.push(2.2 * f);
            d.i.push(2.0);
            d.e.push(7.0 * f);
            d.w.push(7.0);
        }
        // Charge: V rises 3.0 → 4.2.
        let mut c = PhaseRecord::default();
        for k in 0..n {
            let f = k as f64 / (n - 1) as f64;
            c.t.push(k as f64 * 10.0);
            c.v.push(3.0 + f * 1.2);
            c.q.push(2.0 * f);
            c.i.push(-2.0);
            c.e.push(7.0 * f);
            c.w.push(-7.0);
        }
        CycleRecord {
            cycle_index: 1,
            discharge: d,
            charge: c,
            temperature_c: 30.0,
            protocol_id: "r".into(),
        }
    }

    #[test]
    fn vq_midpoint_of_linear_ramp() {
        let rec = ramp_record();
        let cfg = ResampleConfig {
            grid_len: 11,
            ..Default::default()
        };
        let rs = resample_cycle(&rec, &cfg).unwrap();
        // Midpoint of the Q grid sits at Q = 1.1 where V = (4.2+2.75)/2.
        let mid = rs.discharge.vq[5];
        assert!((mid - 3.475).abs() < 1e-9, "mid = {}", mid);
        assert!(rs.discharge.vq.iter().all(|v| !v.is_nan()));
    }

    #[test]
    fn qv_is_nan_outside_observed_voltage_range() {
        let rec = ramp_record();
        let cfg = ResampleConfig {
            grid_len: 30,
            ..Default::default()
        };
        let rs = resample_cycle(&rec, &cfg).unwrap();
        // Charge phase spans 3.0..4.2 V; grid points below 3.0 V are NaN.
        let grid = linspace(2.75, 4.2, 30);
        for (k, &v) in grid.iter().enumerate() {
            if v < 3.0 {
                assert!(rs.charge.qv[k].is_nan(), "expected NaN at {} V", v);
            } else {
                assert!(!rs.charge.qv[k].is_nan(), "expected value at {} V", v);
            }
        }
        // nanmean skips those NaN grid points.
        let m = nanstats::nanmean(&rs.charge.qv);
        assert!(m.is_finite());
    }

    #[test]
    fn dvdq_of_linear_ramp_is_constant_and_zero_dq_is_nan() {
        let rec = ramp_record();
        let cfg = ResampleConfig::default();
        let rs = resample_cycle(&rec, &cfg).unwrap();
        let expected = -(4.2 - 2.75) / 2.2;
        for &d in &rs.discharge.dvdq {
            assert!((d - expected).abs() < 1e-9, "dvdq = {}", d);
        }

        // A rest (q flat, v flat) produces 0/0 → NaN.
        let mut rec = ramp_record();
        rec.discharge.q[1] = rec.discharge.q[0];
        rec.discharge.v[1] = rec.discharge.v[0];
        let rs = resample_cycle(&rec, &cfg).unwrap();
        assert!(rs.discharge.dvdq[0].is_nan());
    }

    #[test]
    fn constant_voltage_dvdq_is_zero() {
        let mut rec = ramp_record();
        for v in rec.discharge.v.iter_mut() {
            *v = 3.5;
        }
        let rs = resample_cycle(&rec, &ResampleConfig::default()).unwrap();
        assert!(rs.discharge.dvdq.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn too_short_phase_is_an_error() {
        let mut rec = ramp_record();
        rec.charge = PhaseRecord {
            t: vec![0.0],
            v: vec![3.0],
            i: vec![0.0],
            q: vec![0.0],
            e: vec![0.0],
            w: vec![0.0],
        };
        let err = resample_cycle(&rec, &ResampleConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cycle 1"), "{}", msg);
        assert!(msg.contains("Charge"), "{}", msg);
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segment_agg(&[1.0, 2.0, 3.0, 4.0], 3, 4, AggKind::NanMean), 3.0);
        assert_eq!(
            segment_agg(&[1.0, f64::NAN, 3.0], 1, 1, AggKind::NanMean),
            2.0
        );
        assert_eq!(segment_agg(&[5.0, 5.0, 5.0], 1, 1, AggKind::NanVar), 0.0);
        assert!(segment_agg(&[5.0, 5.0, 5.0], 1, 1, AggKind::NanSkew).is_nan());
    }

    #[test]
    fn segments_tile_exactly_with_remainder_to_last() {
        for len in [1usize, 4, 10, 99, 100, 101] {
            for total in [1u32, 2, 3, 4, 7] {
                let mut covered = 0;
                let mut prev_hi = 0;
                for a in 1..=total {
                    let (lo, hi) = segment_bounds(len, a, total);
                    assert_eq!(lo, prev_hi, "gap at len={} D={} a={}", len, total, a);
                    covered += hi - lo;
                    prev_hi = hi;
                }
                assert_eq!(covered, len);
                assert_eq!(prev_hi, len);
            }
        }
        // len 10, D 4: widths 2,2,2,4 (remainder absorbed by the last).
        assert_eq!(segment_bounds(10, 1, 4), (0, 2));
        assert_eq!(segment_bounds(10, 4, 4), (6, 10));
    }

    #[test]
    fn group_sizes_match_integer_partition_rule() {
        let sizes = |n: usize, k: u32| -> Vec<usize> {
            group_cycles(n, k)
                .unwrap()
                .into_iter()
                .map(|r| r.len())
                .collect()
        };
        assert_eq!(sizes(50, 7), vec![7, 7, 7, 7, 7, 7, 8]);
        assert_eq!(sizes(50, 5), vec![10, 10, 10, 10, 10]);
        assert_eq!(sizes(50, 1), vec![50]);
        assert!(group_cycles(3, 7).is_err());
    }
}
