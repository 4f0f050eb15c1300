//! Synthetic lithium-ion cell simulator.
//!
//! An equivalent-circuit cell (open-circuit voltage table plus series
//! resistance) is driven by randomized discharge protocols and a two-stage
//! constant-power charge, emitting per-cycle sampled records. Degradation
//! is parametric: linear capacity fade with an optional knee (accelerated
//! fade), square-root resistance growth, and temperature penalties. The
//! simulator exists to exercise the downstream pipeline, not to make
//! electrochemical fidelity claims.

mod cycle;
mod life;

pub use cycle::{run_cycle, CellState, CycleConfig};
pub use life::{run_life, LifeConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open-circuit voltage as a monotone function of state of charge,
/// linearly interpolated and clamped at the table ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvTable {
    pub soc: Vec<f64>,
    pub voltage: Vec<f64>,
}

impl OcvTable {
    /// 21-point layered-oxide/graphite-like curve from 3.0 V at SOC 0.02
    /// to 4.2 V at SOC 1.0.
    pub fn default_nmc() -> Self {
        let soc: Vec<f64> = (0..21).map(|i| 0.02 + 0.049 * i as f64).collect();
        let voltage = vec![
            3.000, 3.300, 3.420, 3.500, 3.550, 3.590, 3.620, 3.645, 3.670, 3.700, 3.730,
            3.765, 3.800, 3.840, 3.880, 3.925, 3.975, 4.030, 4.080, 4.140, 4.200,
        ];
        OcvTable { soc, voltage }
    }

    pub fn validate(&self, v_min: f64, v_max: f64) -> Result<()> {
        if self.soc.len() != self.voltage.len() || self.soc.len() < 2 {
            return Err(Error::invalid("OCV table needs >= 2 matched points"));
        }
        for w in self.soc.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("OCV table SOC must be strictly increasing"));
            }
        }
        for w in self.voltage.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("OCV table voltage must be strictly increasing"));
            }
        }
        let lo = *self.voltage.first().unwrap();
        let hi = *self.voltage.last().unwrap();
        if lo < v_min || hi > v_max {
            return Err(Error::invalid(format!(
                "OCV range [{}, {}] outside cell window [{}, {}]",
                lo, hi, v_min, v_max
            )));
        }
        Ok(())
    }

    /// Interpolated OCV; clamps outside the tabulated SOC range.
    pub fn voltage_at(&self, soc: f64) -> f64 {
        if soc <= self.soc[0] {
            return self.voltage[0];
        }
        let last = self.soc.len() - 1;
        if soc >= self.soc[last] {
            return self.voltage[last];
        }
        let hi = self.soc.partition_point(|&s| s <= soc);
        let lo = hi - 1;
        let w = (soc - self.soc[lo]) / (self.soc[hi] - self.soc[lo]);
        self.voltage[lo] + w * (self.voltage[hi] - self.voltage[lo])
    }
}

/// Cell construction and degradation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub rated_capacity_ah: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub ocv: OcvTable,
    /// Fresh series resistance, Ω.
    pub r0_ohm: f64,
    /// Resistance growth coefficient: R(n) = r0 · (1 + r_growth · √n).
    pub r_growth: f64,
    /// Capacity fade per cycle as a fraction of rated capacity.
    pub fade_per_cycle: f64,
    /// Cycle index after which fade accelerates.
    pub knee_cycle: Option<usize>,
    /// Fade multiplier applied after the knee (> 1).
    pub knee_fade_multiplier: f64,
    /// Ambient temperature, °C.
    pub temperature_c: f64,
    /// Extra fade and resistance per °C below 25 °C.
    pub low_temp_penalty: f64,
    /// Extra fade per °C above 55 °C.
    pub high_temp_penalty: f64,
    /// Measurement noise on recorded voltage, V (physics is noise-free).
    pub v_noise_sigma: f64,
    /// Discharge stops when SOC falls to this reserve even if the voltage
    /// cutoff has not been reached.
    pub soc_cutoff: f64,
    pub seed: u64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            rated_capacity_ah: 2.2,
            v_min: 2.75,
            v_max: 4.2,
            ocv: OcvTable::default_nmc(),
            r0_ohm: 0.05,
            r_growth: 0.008,
            fade_per_cycle: 0.001,
            knee_cycle: None,
            knee_fade_multiplier: 6.0,
            temperature_c: 30.0,
            low_temp_penalty: 0.015,
            high_temp_penalty: 0.01,
            v_noise_sigma: 0.002,
            soc_cutoff: 0.005,
            seed: 0,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rated_capacity_ah > 0.0) {
            return Err(Error::invalid("rated_capacity_ah must be positive"));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::invalid("v_min must be below v_max"));
        }
        self.ocv.validate(self.v_min, self.v_max)?;
        if self.r0_ohm < 0.0 || self.r_growth < 0.0 || self.fade_per_cycle < 0.0 {
            return Err(Error::invalid("resistance/fade parameters must be non-negative"));
        }
        if self.knee_cycle.is_some() && !(self.knee_fade_multiplier > 1.0) {
            return Err(Error::invalid("knee_fade_multiplier must exceed 1"));
        }
        if self.low_temp_penalty < 0.0 || self.high_temp_penalty < 0.0 {
            return Err(Error::invalid("temperature penalties must be non-negative"));
        }
        if self.v_noise_sigma < 0.0 {
            return Err(Error::invalid("v_noise_sigma must be non-negative"));
        }
        if !(0.0..0.5).contains(&self.soc_cutoff) {
            return Err(Error::invalid(format!(
                "soc_cutoff {} outside [0, 0.5)",
                self.soc_cutoff
            )));
        }
        Ok(())
    }

    /// Fade multiplier from ambient temperature: unity in the benign
    /// 25–55 °C band, growing linearly outside it.
    pub fn temp_factor(&self) -> f64 {
        1.0 + self.low_temp_penalty * (25.0 - self.temperature_c).max(0.0)
            + self.high_temp_penalty * (self.temperature_c - 55.0).max(0.0)
    }

    /// Cold operation also raises effective resistance.
    pub fn cold_resistance_factor(&self) -> f64 {
        1.0 + self.low_temp_penalty * (25.0 - self.temperature_c).max(0.0)
    }

    /// Available capacity at cycle `n` (1-based): linear fade with an
    /// optional knee that multiplies the per-cycle fade thereafter.
    pub fn capacity_at(&self, n: usize) -> f64 {
        let effective = match self.knee_cycle {
            Some(knee) if n > knee => {
                knee as f64 + self.knee_fade_multiplier * (n - knee) as f64
            }
            _ => n as f64,
        };
        let fraction = 1.0 - self.fade_per_cycle * self.temp_factor() * effective;
        self.rated_capacity_ah * fraction.max(0.05)
    }

    /// Series resistance at cycle `n` (1-based).
    pub fn resistance_at(&self, n: usize) -> f64 {
        self.r0_ohm * (1.0 + self.r_growth * (n as f64).sqrt()) * self.cold_resistance_factor()
    }
}

/// Two-stage constant-power charge: high power up to the switch voltage,
/// then low power up to the charge cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeSpec {
    pub high_power_w: f64,
    pub low_power_w: f64,
    pub switch_voltage_v: f64,
}

impl Default for ChargeSpec {
    fn default() -> Self {
        // Refills a fresh 2.2 Ah cell in under an hour.
        ChargeSpec {
            high_power_w: 13.0,
            low_power_w: 5.0,
            switch_voltage_v: 4.08,
        }
    }
}

impl ChargeSpec {
    pub fn validate(&self, v_min: f64, v_max: f64) -> Result<()> {
        if !(self.high_power_w > self.low_power_w && self.low_power_w > 0.0) {
            return Err(Error::invalid(
                "charge powers must satisfy high_power > low_power > 0",
            ));
        }
        if !(v_min < self.switch_voltage_v && self.switch_voltage_v < v_max) {
            return Err(Error::invalid(format!(
                "switch voltage {} outside ({}, {})",
                self.switch_voltage_v, v_min, v_max
            )));
        }
        Ok(())
    }
}

/// Sampled series of one phase (charge or discharge) of one cycle.
///
/// `t` is phase-relative seconds; `q` and `e` are cumulative |Ah| and |Wh|
/// within the phase and equal the running trapezoidal integrals of `|i|`
/// and `|w|` over the recorded samples. `i` and `w` are signed: positive
/// on discharge, negative on charge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub e: Vec<f64>,
    pub w: Vec<f64>,
}

impl PhaseRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_q(&self) -> f64 {
        self.q.last().copied().unwrap_or(0.0)
    }

    pub fn final_e(&self) -> f64 {
        self.e.last().copied().unwrap_or(0.0)
    }

    /// Self-consistency of the emitted arrays: strictly increasing time,
    /// non-decreasing q, and q/e matching the trapezoidal integrals of
    /// |i| and |w| within 0.1 %.
    pub fn check_consistency(&self, v_min: f64, v_max: f64) -> Result<()> {
        let n = self.len();
        if [&self.v, &self.i, &self.q, &self.e, &self.w]
            .iter()
            .any(|a| a.len() != n)
        {
            return Err(Error::invalid("phase arrays have mismatched lengths"));
        }
        for k in 1..n {
            if self.t[k] <= self.t[k - 1] {
                return Err(Error::invalid(format!("time not increasing at sample {}", k)));
            }
            if self.q[k] < self.q[k - 1] - 1e-12 {
                return Err(Error::invalid(format!("q decreasing at sample {}", k)));
            }
        }
        for (k, &v) in self.v.iter().enumerate() {
            if v < v_min - 0.05 || v > v_max + 0.05 {
                return Err(Error::invalid(format!(
                    "voltage {} outside bounds at sample {}",
                    v, k
                )));
            }
        }
        let mut q_trap = 0.0;
        let mut e_trap = 0.0;
        for k in 1..n {
            let dt_h = (self.t[k] - self.t[k - 1]) / 3600.0;
            q_trap += 0.5 * (self.i[k - 1].abs() + self.i[k].abs()) * dt_h;
            e_trap += 0.5 * (self.w[k - 1].abs() + self.w[k].abs()) * dt_h;
        }
        let rel = |have: f64, want: f64| {
            if want.abs() < 1e-12 {
                have.abs()
            } else {
                (have - want).abs() / want.abs()
            }
        };
        if rel(self.final_q(), q_trap) > 1e-3 {
            return Err(Error::invalid(format!(
                "q {} deviates from trapezoidal ∫|i|dt {}",
                self.final_q(),
                q_trap
            )));
        }
        if rel(self.final_e(), e_trap) > 1e-3 {
            return Err(Error::invalid(format!(
                "e {} deviates from trapezoidal ∫|w|dt {}",
                self.final_e(),
                e_trap
            )));
        }
        Ok(())
    }
}

/// One full cycle: discharge under a protocol, then the two-stage charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle index.
    pub cycle_index: usize,
    pub discharge: PhaseRecord,
    pub charge: PhaseRecord,
    pub temperature_c: f64,
    pub protocol_id: String,
}

/// Why a life run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Discharge capacity fell below the hard-stop fraction of rated.
    ReachedEol,
    MaxCycles,
    ProtocolExhausted,
}

/// Complete life of one simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellHistory {
    pub cell_id: String,
    pub params: CellParams,
    pub cycles: Vec<CycleRecord>,
    pub end_reason: EndReason,
}

impl CellHistory {
    /// Final discharge capacity of every cycle, in order.
    pub fn discharge_capacities(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.discharge.final_q()).collect()
    }
}

/// JSONL persistence: two lines per cycle (discharge then charge), each
/// matching the documented schema.
pub mod io {
    use std::io::{BufRead, Write};

    use serde::{Deserialize, Serialize};

    use super::*;

    #[derive(Serialize)]
    struct Line<'a> {
        cell_id: &'a str,
        cycle: usize,
        temp_c: f64,
        phase: &'a str,
        t: &'a [f64],
        v: &'a [f64],
        i: &'a [f64],
        q: &'a [f64],
        e: &'a [f64],
        w: &'a [f64],
        protocol_id: &'a str,
    }

    #[derive(Deserialize)]
    struct OwnedLine {
        cell_id: String,
        cycle: usize,
        temp_c: f64,
        phase: String,
        t: Vec<f64>,
        v: Vec<f64>,
        i: Vec<f64>,
        q: Vec<f64>,
        e: Vec<f64>,
        w: Vec<f64>,
        protocol_id: String,
    }

    /// Stream a history as JSON-lines.
    pub fn write_history_jsonl<W: Write>(out: &mut W, history: &CellHistory) -> Result<()> {
        for cycle in &history.cycles {
            for (phase_name, phase) in
                [("discharge", &cycle.discharge), ("charge", &cycle.charge)]
            {
                let line = Line {
                    cell_id: &history.cell_id,
                    cycle: cycle.cycle_index,
                    temp_c: cycle.temperature_c,
                    phase: phase_name,
                    t: &phase.t,
                    v: &phase.v,
                    i: &phase.i,
                    q: &phase.q,
                    e: &phase.e,
                    w: &phase.w,
                    protocol_id: &cycle.protocol_id,
                };
                serde_json::to_writer(&mut *out, &line)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Sidecar metadata persisted next to the JSONL stream so a history
    /// can be reconstructed exactly.
    #[derive(Serialize, Deserialize)]
    pub struct HistoryMeta {
        pub cell_id: String,
        pub params: CellParams,
        pub end_reason: EndReason,
    }

    /// Rebuild a history from a JSONL reader plus its metadata.
    pub fn read_history_jsonl<R: BufRead>(input: R, meta: HistoryMeta) -> Result<CellHistory> {
        let mut cycles: Vec<CycleRecord> = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: OwnedLine = serde_json::from_str(&line)?;
            if parsed.cell_id != meta.cell_id {
                return Err(Error::cell(
                    parsed.cell_id,
                    format!("record does not belong to cell {}", meta.cell_id),
                ));
            }
            let phase = PhaseRecord {
                t: parsed.t,
                v: parsed.v,
                i: parsed.i,
                q: parsed.q,
                e: parsed.e,
                w: parsed.w,
            };
            match cycles.last_mut() {
                Some(last) if last.cycle_index == parsed.cycle => {
                    if parsed.phase != "charge" {
                        return Err(Error::cell(
                            parsed.cell_id,
                            format!("duplicate {} phase in cycle {}", parsed.phase, parsed.cycle),
                        ));
                    }
                    last.charge = phase;
                }
                _ => {
                    if parsed.phase != "discharge" {
                        return Err(Error::cell(
                            parsed.cell_id,
                            format!("cycle {} starts with phase {}", parsed.cycle, parsed.phase),
                        ));
                    }
                    cycles.push(CycleRecord {
                        cycle_index: parsed.cycle,
                        discharge: phase,
                        charge: PhaseRecord::default(),
                        temperature_c: parsed.temp_c,
                        protocol_id: parsed.protocol_id,
                    });
                }
            }
        }
        Ok(CellHistory {
            cell_id: meta.cell_id,
            params: meta.params,
            cycles,
            end_reason: meta.end_reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ocv_is_monotone_and_in_window() {
        let ocv = OcvTable::default_nmc();
        ocv.validate(2.75, 4.2).unwrap();
        assert_eq!(ocv.voltage_at(1.0), 4.2);
        assert_eq!(ocv.voltage_at(0.0), 3.0);
        let mid = ocv.voltage_at(0.5);
        assert!(mid > 3.5 && mid < 3.9, "mid = {}", mid);
    }

    #[test]
    fn capacity_fade_with_knee() {
        let params = CellParams {
            fade_per_cycle: 0.001,
            knee_cycle: Some(100),
            knee_fade_multiplier: 6.0,
            temperature_c: 30.0,
            ..Default::default()
        };
        let before = params.capacity_at(100);
        let after = params.capacity_at(101);
        let step_pre = params.capacity_at(99) - before;
        let step_post = before - after;
        assert!((step_post / step_pre - 6.0).abs() < 1e-9);
    }

    #[test]
    fn temp_factor_penalizes_cold_and_hot() {
        let mut params = CellParams::default();
        params.temperature_c = 30.0;
        assert_eq!(params.temp_factor(), 1.0);
        params.temperature_c = -10.0;
        assert!(params.temp_factor() > 1.3);
        params.temperature_c = 70.0;
        assert!(params.temp_factor() > 1.1);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = CellParams::default();
        p.v_min = 4.5;
        assert!(p.validate().is_err());
        let mut p = CellParams::default();
        p.knee_cycle = Some(10);
        p.knee_fade_multiplier = 1.0;
        assert!(p.validate().is_err());
        let mut p = CellParams::default();
        p.ocv.voltage[3] = p.ocv.voltage[2];
        assert!(p.validate().is_err());
    }
}
