//! Longitudinal vehicle dynamics: speed trace to battery power trace.

use crate::error::Result;

use super::{PowerTrace, SpeedTrace, VehicleParams};

/// Convert a speed trace into the battery power demanded at the wheels:
///
/// ```text
/// P(t) = max(0, v · (m·a + ½·ρ·CdA·v² + Crr·m·g) / η)
/// ```
///
/// Acceleration is the backward finite difference (zero at the first
/// sample). Negative (regenerative) power is clipped to zero.
pub fn speed_to_power(trace: &SpeedTrace, params: &VehicleParams) -> Result<PowerTrace> {
    trace.validate()?;
    params.validate()?;

    let mut samples = Vec::with_capacity(trace.samples.len());
    for (idx, &(t, v)) in trace.samples.iter().enumerate() {
        let a = if idx == 0 {
            0.0
        } else {
            let (t_prev, v_prev) = trace.samples[idx - 1];
            (v - v_prev) / (t - t_prev)
        };
        let force = params.mass_kg * a
            + 0.5 * params.air_density_kg_m3 * params.drag_area_m2 * v * v
            + params.rolling_coeff * params.mass_kg * params.gravity_m_s2;
        let power = (v * force / params.drivetrain_efficiency).max(0.0);
        samples.push((t, power));
    }
    PowerTrace::new(samples)
}
