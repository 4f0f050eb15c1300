//! Randomized discharge-protocol generation.
//!
//! A driving speed trace is converted into a battery power trace through a
//! longitudinal vehicle-dynamics model, a Gaussian-emission hidden Markov
//! model is fit to the power observations, and fresh protocols are sampled
//! from the model, clipped to the tester's power cap, idle-compacted, and
//! merged into timed power steps.

mod dynamics;
mod hmm;
mod post;

pub use dynamics::speed_to_power;
pub use hmm::{fit_hmm, loglik, sample_protocol, FitOptions, GaussianHmm, HmmFit};
pub use post::postprocess;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A driving speed trace: `(time s, speed m/s)` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTrace {
    pub samples: Vec<(f64, f64)>,
}

impl SpeedTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        let trace = SpeedTrace { samples };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("speed trace is empty"));
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!(
                    "speed trace time must be strictly increasing (t={} then t={})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, v)) = self
            .samples
            .iter()
            .find(|(t, v)| !v.is_finite() || !t.is_finite() || *v < 0.0)
        {
            return Err(Error::invalid(format!(
                "bad speed sample ({} m/s at t={})",
                v, t
            )));
        }
        Ok(())
    }

    /// Parse the `time_s,speed_mps` CSV format.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty speed CSV"))?;
        if header.trim() != "time_s,speed_mps" {
            return Err(Error::invalid(format!(
                "speed CSV header must be `time_s,speed_mps`, got `{}`",
                header.trim()
            )));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::invalid(format!("bad speed CSV line {}: `{}`", lineno + 2, line))
                    })
            };
            let t = parse(parts.next())?;
            let v = parse(parts.next())?;
            samples.push((t, v));
        }
        SpeedTrace::new(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,speed_mps\n");
        for (t, v) in &self.samples {
            out.push_str(&format!("{},{}\n", t, v));
        }
        out
    }
}

/// Longitudinal vehicle-dynamics parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass_kg: f64,
    /// Drag coefficient times frontal area, m².
    pub drag_area_m2: f64,
    pub air_density_kg_m3: f64,
    pub rolling_coeff: f64,
    pub drivetrain_efficiency: f64,
    pub gravity_m_s2: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        // Compact-EV-like defaults; any consistent parameter set works for
        // pipeline validation.
        VehicleParams {
            mass_kg: 1500.0,
            drag_area_m2: 0.7,
            air_density_kg_m3: 1.2,
            rolling_coeff: 0.01,
            drivetrain_efficiency: 0.9,
            gravity_m_s2: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass_kg", self.mass_kg),
            ("drag_area_m2", self.drag_area_m2),
            ("air_density_kg_m3", self.air_density_kg_m3),
            ("rolling_coeff", self.rolling_coeff),
            ("drivetrain_efficiency", self.drivetrain_efficiency),
            ("gravity_m_s2", self.gravity_m_s2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{} must be positive, got {}", name, v)));
            }
        }
        if self.drivetrain_efficiency > 1.0 {
            return Err(Error::invalid(format!(
                "drivetrain_efficiency must be <= 1, got {}",
                self.drivetrain_efficiency
            )));
        }
        Ok(())
    }
}

/// A battery power trace: `(time s, power W)` samples. Raw traces (model
/// samples, dynamics output) may carry values outside `[0, cap]`; only
/// post-processed protocols guarantee the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub samples: Vec<(f64, f64)>,
}

impl PowerTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        let trace = PowerTrace { samples };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("power trace is empty"));
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!(
                    "power trace time must be strictly increasing (t={} then t={})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(())
    }

    pub fn powers(&self) -> Vec<f64> {
        self.samples.iter().map(|&(_, p)| p).collect()
    }

    /// Linearly rescale so the maximum power equals `cap` (matches a pack
    /// trace to the per-cell tester limit). Traces with a non-positive
    /// maximum are returned unchanged.
    pub fn scaled_to_max(&self, cap: f64) -> PowerTrace {
        let max = self
            .samples
            .iter()
            .map(|&(_, p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            return self.clone();
        }
        let k = cap / max;
        PowerTrace {
            samples: self.samples.iter().map(|&(t, p)| (t, p * k)).collect(),
        }
    }

    /// Linearly rescale so the mean power equals `target`. Traces with a
    /// non-positive mean are returned unchanged.
    pub fn scaled_to_mean(&self, target: f64) -> PowerTrace {
        let mean = self.samples.iter().map(|&(_, p)| p).sum::<f64>() / self.samples.len() as f64;
        if mean <= 0.0 {
            return self.clone();
        }
        let k = target / mean;
        PowerTrace {
            samples: self.samples.iter().map(|&(t, p)| (t, p * k)).collect(),
        }
    }

    /// Clamp every power into `[lo, hi]`.
    pub fn clipped(&self, lo: f64, hi: f64) -> PowerTrace {
        PowerTrace {
            samples: self
                .samples
                .iter()
                .map(|&(t, p)| (t, p.clamp(lo, hi)))
                .collect(),
        }
    }
}

/// A timed sequence of discharge power steps driven to a cell under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub protocol_id: String,
    pub seed: u64,
    pub steps: Vec<ProtocolStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStep {
    pub duration_s: f64,
    pub power_w: f64,
}

impl ProtocolSpec {
    pub fn validate(&self, cap: f64) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid(format!(
                "protocol {} has no steps",
                self.protocol_id
            )));
        }
        for step in &self.steps {
            if !(step.duration_s > 0.0) {
                return Err(Error::invalid(format!(
                    "protocol {}: non-positive step duration {}",
                    self.protocol_id, step.duration_s
                )));
            }
            if step.power_w < 0.0 || step.power_w > cap {
                return Err(Error::invalid(format!(
                    "protocol {}: power {} W outside [0, {}]",
                    self.protocol_id, step.power_w, cap
                )));
            }
        }
        Ok(())
    }

    pub fn total_duration_s(&self) -> f64 {
        self.steps.iter().map(|s| s.duration_s).sum()
    }

    pub fn max_power_w(&self) -> f64 {
        self.steps.iter().map(|s| s.power_w).fold(0.0, f64::max)
    }
}
