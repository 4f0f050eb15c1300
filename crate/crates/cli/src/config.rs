//! Run configuration: one TOML file with per-stage sections. Unknown keys
//! are rejected; every field has a default so partial files work.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cyclekit::pipeline::KneeMode;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub protocol: ProtocolSection,
    pub vehicle: VehicleSection,
    pub fleet: FleetSection,
    pub features: FeatureSection,
    pub tasks: TaskSection,
    pub paths: PathSection,
}

/// Longitudinal-dynamics constants for the speed-to-power conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub mass_kg: f64,
    pub drag_area_m2: f64,
    pub air_density_kg_m3: f64,
    pub rolling_coeff: f64,
    pub drivetrain_efficiency: f64,
    pub gravity_m_s2: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let d = cyclekit::protocol::VehicleParams::default();
        VehicleSection {
            mass_kg: d.mass_kg,
            drag_area_m2: d.drag_area_m2,
            air_density_kg_m3: d.air_density_kg_m3,
            rolling_coeff: d.rolling_coeff,
            drivetrain_efficiency: d.drivetrain_efficiency,
            gravity_m_s2: d.gravity_m_s2,
        }
    }
}

impl VehicleSection {
    pub fn to_params(&self) -> cyclekit::protocol::VehicleParams {
        cyclekit::protocol::VehicleParams {
            mass_kg: self.mass_kg,
            drag_area_m2: self.drag_area_m2,
            air_density_kg_m3: self.air_density_kg_m3,
            rolling_coeff: self.rolling_coeff,
            drivetrain_efficiency: self.drivetrain_efficiency,
            gravity_m_s2: self.gravity_m_s2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub n_states: usize,
    pub cap_w: f64,
    pub zero_keep_ratio: f64,
    /// The pack-level power trace is rescaled to this mean cell power
    /// before the cap clip.
    pub mean_power_w: f64,
    pub sample_duration_s: f64,
    pub sample_step_s: f64,
    pub seed: u64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            n_states: 8,
            cap_w: 16.0,
            zero_keep_ratio: 0.25,
            mean_power_w: 7.0,
            sample_duration_s: 10_800.0,
            sample_step_s: 150.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetSection {
    pub cells: usize,
    pub temperatures_c: Vec<f64>,
    pub knee_fraction: f64,
    pub max_cycles: usize,
    pub dt_s: f64,
    pub base_seed: u64,
}

impl Default for FleetSection {
    fn default() -> Self {
        FleetSection {
            cells: 8,
            temperatures_c: vec![-10.0, 10.0, 30.0, 55.0, 70.0],
            knee_fraction: 0.0,
            max_cycles: 330,
            dt_s: 1.0,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    /// Cycle-group count (K).
    pub cycle_groups: u32,
    /// Segment count (D).
    pub segments: u32,
    /// Early-cycle window (N).
    pub early_cycles: u32,
    pub grid_len: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            cycle_groups: 7,
            segments: 4,
            early_cycles: 50,
            grid_len: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub seeds: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    pub n_trees: usize,
    pub eol_fraction: f64,
    pub min_cycles: usize,
    pub knee_interval: usize,
    pub knee_threshold: f64,
    pub knee_mode: KneeModeName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeModeName {
    MaxSlope,
    MaxSlopeChange,
}

impl From<KneeModeName> for KneeMode {
    fn from(value: KneeModeName) -> Self {
        match value {
            KneeModeName::MaxSlope => KneeMode::MaxSlope,
            KneeModeName::MaxSlopeChange => KneeMode::MaxSlopeChange,
        }
    }
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            seeds: 16,
            base_seed: 0,
            train_fraction: 0.6,
            n_trees: 200,
            eol_fraction: 0.8,
            min_cycles: 50,
            knee_interval: 50,
            knee_threshold: 0.0005,
            knee_mode: KneeModeName::MaxSlopeChange,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub out_dir: String,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection {
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        // Environment overrides are limited to paths.
        if let Ok(dir) = std::env::var("CYCLEKIT_OUT_DIR") {
            config.paths.out_dir = dir;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.protocol.n_states == 0 {
            bail!("protocol.n_states must be >= 1");
        }
        if !(self.protocol.cap_w > 0.0) {
            bail!("protocol.cap_w must be positive");
        }
        if !(self.protocol.zero_keep_ratio > 0.0 && self.protocol.zero_keep_ratio <= 1.0) {
            bail!("protocol.zero_keep_ratio must be in (0, 1]");
        }
        if self.fleet.cells == 0 {
            bail!("fleet.cells must be >= 1");
        }
        if self.fleet.temperatures_c.is_empty() {
            bail!("fleet.temperatures_c must not be empty");
        }
        if !(0.0..=1.0).contains(&self.fleet.knee_fraction) {
            bail!("fleet.knee_fraction must be in [0, 1]");
        }
        if self.features.cycle_groups == 0 || self.features.segments == 0 {
            bail!("features.cycle_groups and features.segments must be >= 1");
        }
        if self.features.early_cycles < self.features.cycle_groups {
            bail!("features.early_cycles must be >= features.cycle_groups");
        }
        if self.tasks.seeds == 0 {
            bail!("tasks.seeds must be >= 1");
        }
        if !(self.tasks.train_fraction > 0.0 && self.tasks.train_fraction < 1.0) {
            bail!("tasks.train_fraction must be in (0, 1)");
        }
        if !(self.tasks.eol_fraction > 0.0 && self.tasks.eol_fraction < 1.0) {
            bail!("tasks.eol_fraction must be in (0, 1)");
        }
        self.vehicle
            .to_params()
            .validate()
            .map_err(|e| anyhow::anyhow!("vehicle section: {}", e))?;
        Ok(())
    }

    /// Resolved config as TOML, printed by every command.
    pub fn render(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|_| "<unrenderable>".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: RunConfig = toml::from_str("[fleet]\ncells = 3\n").unwrap();
        assert_eq!(cfg.fleet.cells, 3);
        assert_eq!(cfg.features.cycle_groups, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("[fleet]\nbogus = 1\n");
        assert!(err.is_err());
        let err = toml::from_str::<RunConfig>("nonsense = true\n");
        assert!(err.is_err());
    }
}
