//! Single-cycle simulation: protocol-driven constant-power discharge and
//! two-stage constant-power charge against an equivalent-circuit cell.

use rand::rngs::StdRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::protocol::ProtocolSpec;

use super::{CellParams, ChargeSpec, CycleRecord, PhaseRecord};

/// Mutable electrical state of a cell between cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    /// State of charge in [0, 1], relative to the current available capacity.
    pub soc: f64,
    /// Available capacity for the current cycle, Ah.
    pub capacity_ah: f64,
    /// Series resistance for the current cycle, Ω.
    pub resistance_ohm: f64,
}

impl CellState {
    pub fn fresh(params: &CellParams) -> Self {
        CellState {
            soc: 1.0,
            capacity_ah: params.rated_capacity_ah,
            resistance_ohm: params.r0_ohm,
        }
    }
}

/// Sampling knobs for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    /// Integration step, s.
    pub dt_s: f64,
    /// Emit every k-th integration step (step and phase boundaries are
    /// always emitted).
    pub record_every: u32,
    /// Safety bound on any single phase, s.
    pub max_phase_s: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            dt_s: 1.0,
            record_every: 1,
            max_phase_s: 4.0 * 3600.0,
        }
    }
}

/// Constant-power discharge operating point at open-circuit voltage `u`:
/// solves `i = p / (u − i·r)` by fixed point (quadratic closed form as
/// fallback). `None` means the power cannot be delivered at or above
/// `v_min`.
fn solve_discharge(u: f64, r: f64, p: f64, v_min: f64) -> Option<(f64, f64)> {
    if p <= 0.0 {
        return Some((0.0, u));
    }
    if r == 0.0 {
        return if u >= v_min { Some((p / u, u)) } else { None };
    }
    let mut i = p / u;
    let mut converged = true;
    for _ in 0..10 {
        let denom = u - i * r;
        if denom <= 1e-6 {
            converged = false;
            break;
        }
        i = p / denom;
    }
    if converged {
        let v = u - i * r;
        if (i * v - p).abs() <= 1e-9 * p.max(1.0) {
            return if v >= v_min { Some((i, v)) } else { None };
        }
    }
    let disc = u * u - 4.0 * r * p;
    if disc < 0.0 {
        return None;
    }
    let i = (u - disc.sqrt()) / (2.0 * r);
    let v = u - i * r;
    if v >= v_min {
        Some((i, v))
    } else {
        None
    }
}

/// Constant-power charge operating point: `i = p / (u + i·r)`, always
/// feasible; returns `(i, v)` with `v = u + i·r`.
fn solve_charge(u: f64, r: f64, p: f64) -> (f64, f64) {
    if r == 0.0 {
        return (p / u, u);
    }
    let mut i = p / u;
    for _ in 0..10 {
        i = p / (u + i * r);
    }
    (i, u + i * r)
}

/// Emits decimated samples whose cumulative q/e columns are the running
/// trapezoidal integrals of the emitted |i| and |w| series, so persisted
/// records are self-consistent at any decimation.
struct Recorder {
    rec: PhaseRecord,
    record_every: u32,
    ticks: u32,
    pending: Option<(f64, f64, f64, f64)>,
    last: Option<(f64, f64, f64)>,
    flush_next: bool,
    q: f64,
    e: f64,
    noise_sigma: f64,
    v_lo: f64,
    v_hi: f64,
}

impl Recorder {
    fn new(record_every: u32, noise_sigma: f64, v_min: f64, v_max: f64) -> Self {
        Recorder {
            rec: PhaseRecord::default(),
            record_every: record_every.max(1),
            ticks: 0,
            pending: None,
            last: None,
            flush_next: false,
            q: 0.0,
            e: 0.0,
            noise_sigma,
            v_lo: v_min - 0.05,
            v_hi: v_max + 0.05,
        }
    }

    /// Register one integration step's operating point at time `t`.
    fn tick(&mut self, t: f64, v: f64, i: f64, w: f64, rng: &mut StdRng) {
        self.pending = Some((t, v, i, w));
        self.ticks += 1;
        if self.flush_next || self.ticks % self.record_every == 0 {
            self.flush_next = false;
            self.flush(rng);
        }
    }

    /// Flush the pending sample and also emit the next tick, so no
    /// recorded interval straddles a power change (keeps the trapezoidal
    /// q/e columns faithful at any decimation).
    fn mark_boundary(&mut self, rng: &mut StdRng) {
        self.flush(rng);
        self.flush_next = true;
    }

    /// Force out the most recent operating point (boundaries, phase end).
    fn flush(&mut self, rng: &mut StdRng) {
        let Some((t, v, i, w)) = self.pending.take() else {
            return;
        };
        if let Some((lt, li, lw)) = self.last {
            let dt_h = (t - lt) / 3600.0;
            self.q += 0.5 * (li + i.abs()) * dt_h;
            self.e += 0.5 * (lw + w.abs()) * dt_h;
        }
        self.last = Some((t, i.abs(), w.abs()));
        // Recorded voltage always stays inside the documented bounds, even
        // for transient operating points at the edges of a phase.
        let v_rec = if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).unwrap();
            (v + noise.sample(rng)).clamp(self.v_lo, self.v_hi)
        } else {
            v.clamp(self.v_lo, self.v_hi)
        };
        self.rec.t.push(t);
        self.rec.v.push(v_rec);
        self.rec.i.push(i);
        self.rec.q.push(self.q);
        self.rec.e.push(self.e);
        self.rec.w.push(w);
    }

    fn finish(mut self, rng: &mut StdRng) -> PhaseRecord {
        self.flush(rng);
        self.rec
    }
}

/// Run one discharge/charge cycle.
///
/// The discharge follows the protocol's power steps, terminating when the
/// protocol ends or the cell cannot hold the commanded power at or above
/// `v_min` (the offending step is truncated at that sample). The charge
/// runs the two-stage constant-power scheme, terminating at `v_max`.
/// Recorded currents and powers are signed: positive on discharge,
/// negative on charge.
pub fn run_cycle(
    state: &mut CellState,
    params: &CellParams,
    protocol: &ProtocolSpec,
    charge: &ChargeSpec,
    cfg: &CycleConfig,
    cycle_index: usize,
    rng: &mut StdRng,
) -> Result<CycleRecord> {
    params.validate()?;
    charge.validate(params.v_min, params.v_max)?;
    if !(cfg.dt_s > 0.0) {
        return Err(Error::invalid("dt_s must be positive"));
    }
    if protocol.steps.is_empty() {
        return Err(Error::invalid(format!(
            "protocol {} has no steps",
            protocol.protocol_id
        )));
    }

    let cap = state.capacity_ah;
    let r = state.resistance_ohm;
    let soc_floor = params.soc_cutoff;

    // Discharge.
    let mut recorder = Recorder::new(cfg.record_every, params.v_noise_sigma, params.v_min, params.v_max);
    let mut t = 0.0;
    // Initial operating point under the first step's power.
    {
        let u = params.ocv.voltage_at(state.soc);
        let p0 = protocol.steps[0].power_w;
        let (i, v, w) = match solve_discharge(u, r, p0, params.v_min) {
            Some((i, v)) => (i, v, p0),
            None => (0.0, u, 0.0),
        };
        recorder.tick(0.0, v, i, w, rng);
        recorder.flush(rng);
    }
    'discharge: for step in &protocol.steps {
        let mut remaining = step.duration_s;
        while remaining > 1e-9 {
            if t >= cfg.max_phase_s {
                break 'discharge;
            }
            let dt = cfg.dt_s.min(remaining);
            let u = params.ocv.voltage_at(state.soc);
            let Some((i, v)) = solve_discharge(u, r, step.power_w, params.v_min) else {
                // Step infeasible at this sample: truncate it and end the
                // discharge at the v_min rule.
                break 'discharge;
            };
            if state.soc <= soc_floor && step.power_w > 0.0 {
                break 'discharge;
            }
            state.soc -= i * dt / 3600.0 / cap;
            t += dt;
            remaining -= dt;
            let boundary = remaining <= 1e-9;
            recorder.tick(t, v, i, step.power_w, rng);
            if boundary {
                recorder.mark_boundary(rng);
            }
        }
    }
    recorder.flush(rng);
    let discharge = recorder.finish(rng);

    // Charge: high power to the switch voltage, low power to v_max.
    let mut recorder = Recorder::new(cfg.record_every, params.v_noise_sigma, params.v_min, params.v_max);
    let mut t = 0.0;
    {
        let u = params.ocv.voltage_at(state.soc);
        let (i, v) = solve_charge(u, r, charge.high_power_w);
        recorder.tick(0.0, v, -i, -charge.high_power_w, rng);
        recorder.flush(rng);
    }
    for (power, cutoff) in [
        (charge.high_power_w, charge.switch_voltage_v),
        (charge.low_power_w, params.v_max),
    ] {
        loop {
            if t >= cfg.max_phase_s || state.soc >= 0.999 {
                break;
            }
            let u = params.ocv.voltage_at(state.soc);
            let (i, v) = solve_charge(u, r, power);
            if v >= cutoff {
                recorder.mark_boundary(rng);
                break;
            }
            let dt = cfg.dt_s;
            state.soc = (state.soc + i * dt / 3600.0 / cap).min(1.0);
            t += dt;
            recorder.tick(t, v, -i, -power, rng);
        }
    }
    let charge_rec = recorder.finish(rng);

    Ok(CycleRecord {
        cycle_index,
        discharge,
        charge: charge_rec,
        temperature_c: params.temperature_c,
        protocol_id: protocol.protocol_id.clone(),
    })
}
