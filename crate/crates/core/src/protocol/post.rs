//! Post-processing of sampled power traces into protocol specifications:
//! cap clipping, idle subsampling, and step merging.

use crate::error::{Error, Result};

use super::{PowerTrace, ProtocolSpec, ProtocolStep};

/// Round to the 0.01 W grid used for step-merge equality.
fn round_power(p: f64) -> f64 {
    (p * 100.0).round() / 100.0
}

/// Turn a raw power trace into a protocol:
///
/// 1. powers are clipped into `[0, cap]` and rounded to 0.01 W;
/// 2. every maximal run of zero-power samples is shortened to its first
///    `ceil(zero_keep_ratio · run_length)` samples;
/// 3. adjacent samples with equal power merge into one timed step.
///
/// Sample durations come from the trace's time spacing (the final sample
/// reuses the preceding spacing).
pub fn postprocess(
    trace: &PowerTrace,
    cap: f64,
    zero_keep_ratio: f64,
    protocol_id: impl Into<String>,
    seed: u64,
) -> Result<ProtocolSpec> {
    trace.validate()?;
    if !(cap > 0.0) {
        return Err(Error::invalid("cap must be positive"));
    }
    if !(zero_keep_ratio > 0.0 && zero_keep_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "zero_keep_ratio must be in (0, 1], got {}",
            zero_keep_ratio
        )));
    }

    let n = trace.samples.len();
    let mut durations = Vec::with_capacity(n);
    for idx in 0..n {
        let d = if idx + 1 < n {
            trace.samples[idx + 1].0 - trace.samples[idx].0
        } else if n >= 2 {
            trace.samples[n - 1].0 - trace.samples[n - 2].0
        } else {
            1.0
        };
        durations.push(d);
    }

    let powers: Vec<f64> = trace
        .samples
        .iter()
        .map(|&(_, p)| round_power(p.clamp(0.0, cap)))
        .collect();

    // Shorten zero runs.
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut idx = 0;
    while idx < n {
        if powers[idx] == 0.0 {
            let start = idx;
            while idx < n && powers[idx] == 0.0 {
                idx += 1;
            }
            let run = idx - start;
            let keep = ((zero_keep_ratio * run as f64).ceil() as usize).clamp(1, run);
            for k in start..start + keep {
                kept.push((0.0, durations[k]));
            }
        } else {
            kept.push((powers[idx], durations[idx]));
            idx += 1;
        }
    }

    // Merge adjacent equal powers.
    let mut steps: Vec<ProtocolStep> = Vec::new();
    for (power, duration) in kept {
        match steps.last_mut() {
            Some(last) if last.power_w == power => last.duration_s += duration,
            _ => steps.push(ProtocolStep {
                duration_s: duration,
                power_w: power,
            }),
        }
    }

    let spec = ProtocolSpec {
        protocol_id: protocol_id.into(),
        seed,
        steps,
    };
    spec.validate(cap)?;
    Ok(spec)
}
