//! Whole-life simulation: one protocol per cycle, parametric degradation,
//! and termination rules.

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::error::Result;
use crate::protocol::ProtocolSpec;

use super::cycle::{run_cycle, CellState, CycleConfig};
use super::{CellHistory, CellParams, ChargeSpec, EndReason};

/// Termination and recording policy for a life run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifeConfig {
    pub max_cycles: usize,
    /// Hard stop: end the run once discharge capacity falls below this
    /// fraction of rated capacity.
    pub hard_stop_fraction: f64,
    pub cycle: CycleConfig,
    /// Cycles 1..=detail_cycles record at `cycle.record_every`; later
    /// cycles record at `tail_record_every` (only their capacity trend is
    /// normally consumed downstream).
    pub detail_cycles: usize,
    pub tail_record_every: u32,
}

impl Default for LifeConfig {
    fn default() -> Self {
        LifeConfig {
            max_cycles: 1000,
            hard_stop_fraction: 0.5,
            cycle: CycleConfig::default(),
            detail_cycles: usize::MAX,
            tail_record_every: 1,
        }
    }
}

/// Run a cell to end of life, drawing one fresh protocol per cycle from
/// the iterator. Deterministic given params (including seed), protocols,
/// and config.
pub fn run_life<I>(
    cell_id: impl Into<String>,
    params: &CellParams,
    mut protocols: I,
    charge: &ChargeSpec,
    cfg: &LifeConfig,
) -> Result<CellHistory>
where
    I: Iterator<Item = ProtocolSpec>,
{
    params.validate()?;
    charge.validate(params.v_min, params.v_max)?;
    let cell_id = cell_id.into();
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut state = CellState::fresh(params);
    let mut cycles = Vec::new();
    let hard_stop = cfg.hard_stop_fraction * params.rated_capacity_ah;

    let mut end_reason = EndReason::MaxCycles;
    for n in 1..=cfg.max_cycles {
        let Some(protocol) = protocols.next() else {
            end_reason = EndReason::ProtocolExhausted;
            break;
        };
        state.capacity_ah = params.capacity_at(n);
        state.resistance_ohm = params.resistance_at(n);
        let cycle_cfg = CycleConfig {
            record_every: if n <= cfg.detail_cycles {
                cfg.cycle.record_every
            } else {
                cfg.tail_record_every
            },
            ..cfg.cycle
        };
        let record = run_cycle(&mut state, params, &protocol, charge, &cycle_cfg, n, &mut rng)?;
        let qd = record.discharge.final_q();
        cycles.push(record);
        if qd < hard_stop {
            end_reason = EndReason::ReachedEol;
            break;
        }
    }

    Ok(CellHistory {
        cell_id,
        params: params.clone(),
        cycles,
        end_reason,
    })
}
