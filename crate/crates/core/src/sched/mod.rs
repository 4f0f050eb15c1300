//! Batch-testing campaign orchestration: per-channel monitors polling
//! cyclers, a master assigning queued protocol specs, atomic checkpoints,
//! and crash recovery.
//!
//! The campaign runs against any backend implementing [`CyclerBackend`];
//! the bundled [`VirtualCycler`] simulates hardware either on a discrete
//! tick clock (deterministic, used by the crash tests) or on the wall
//! clock (for the threaded demonstration mode).

mod campaign;
mod checkpoint;

pub use campaign::{
    load_spec_queues, recover_sim, run_campaign_sim, run_campaign_threaded, write_log_jsonl,
    CampaignConfig, CampaignOutcome,
};
pub use checkpoint::{
    load_checkpoint, write_checkpoint_atomic, ChannelCheckpoint, Checkpoint, CHECKPOINT_VERSION,
};

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ProtocolSpec;

/// Status reported by a cycler channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclerStatus {
    pub spec_id: String,
    pub cycles_completed: u64,
    /// Sticky: once a spec is done it stays done until stopped.
    pub done: bool,
}

/// Abstract battery cycler: can execute a protocol spec on a channel and
/// report progress.
pub trait CyclerBackend: Send {
    /// Begin (or resume) a spec on a channel. `start_cycle` supports
    /// resuming an interrupted spec mid-way.
    fn start(&mut self, channel: usize, spec: &ProtocolSpec, cycles_total: u64, start_cycle: u64)
        -> Result<()>;

    fn poll(&mut self, channel: usize) -> Result<CyclerStatus>;

    fn stop(&mut self, channel: usize) -> Result<()>;

    /// Advance simulated hardware by one tick. Real or wall-clock
    /// backends progress on their own and ignore this.
    fn advance(&mut self) {}
}

/// How a spec execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndStatus {
    Completed,
    Failed,
}

/// Execution summary a monitor submits to the master when its spec ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub channel: usize,
    pub spec_id: String,
    pub cycles_run: u64,
    pub started_tick: u64,
    pub ended_tick: u64,
    pub end_status: EndStatus,
}

enum ClockMode {
    Tick,
    Wall { cycle_duration_s: f64 },
}

struct RunningSpec {
    spec_id: String,
    cycles_total: u64,
    cycles_completed: u64,
    started_at: Instant,
    start_cycle: u64,
}

/// Simulated multi-channel cycler.
pub struct VirtualCycler {
    mode: ClockMode,
    channels: Vec<Option<RunningSpec>>,
    /// Channel fails once its cumulative cycles reach this bound.
    fail_after: HashMap<usize, u64>,
    cycles_run: Vec<u64>,
}

impl VirtualCycler {
    /// Tick-driven instance: `advance` moves every running channel one
    /// cycle forward.
    pub fn simulated(n_channels: usize) -> Self {
        VirtualCycler {
            mode: ClockMode::Tick,
            channels: (0..n_channels).map(|_| None).collect(),
            fail_after: HashMap::new(),
            cycles_run: vec![0; n_channels],
        }
    }

    /// Wall-clock instance: progress accrues with elapsed time.
    pub fn wall_clock(n_channels: usize, cycle_duration_s: f64) -> Self {
        VirtualCycler {
            mode: ClockMode::Wall { cycle_duration_s },
            channels: (0..n_channels).map(|_| None).collect(),
            fail_after: HashMap::new(),
            cycles_run: vec![0; n_channels],
        }
    }

    /// Inject a hardware failure: the channel errors on poll after running
    /// this many cumulative cycles.
    pub fn fail_after(&mut self, channel: usize, cycles: u64) {
        self.fail_after.insert(channel, cycles);
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    fn check(&self, channel: usize) -> Result<()> {
        if channel >= self.channels.len() {
            return Err(Error::invalid(format!(
                "channel {} out of range (have {})",
                channel,
                self.channels.len()
            )));
        }
        Ok(())
    }
}

impl CyclerBackend for VirtualCycler {
    fn start(
        &mut self,
        channel: usize,
        spec: &ProtocolSpec,
        cycles_total: u64,
        start_cycle: u64,
    ) -> Result<()> {
        self.check(channel)?;
        self.channels[channel] = Some(RunningSpec {
            spec_id: spec.protocol_id.clone(),
            cycles_total,
            cycles_completed: start_cycle.min(cycles_total),
            started_at: Instant::now(),
            start_cycle,
        });
        Ok(())
    }

    fn poll(&mut self, channel: usize) -> Result<CyclerStatus> {
        self.check(channel)?;
        if let Some(limit) = self.fail_after.get(&channel) {
            if self.cycles_run[channel] >= *limit {
                return Err(Error::invalid(format!(
                    "channel {}: cycler hardware fault",
                    channel
                )));
            }
        }
        let running = self.channels[channel]
            .as_mut()
            .ok_or_else(|| Error::invalid(format!("channel {} has no running spec", channel)))?;
        if let ClockMode::Wall { cycle_duration_s } = self.mode {
            let elapsed = running.started_at.elapsed().as_secs_f64();
            let cycles = running.start_cycle + (elapsed / cycle_duration_s) as u64;
            running.cycles_completed = cycles.min(running.cycles_total);
        }
        Ok(CyclerStatus {
            spec_id: running.spec_id.clone(),
            cycles_completed: running.cycles_completed,
            done: running.cycles_completed >= running.cycles_total,
        })
    }

    fn stop(&mut self, channel: usize) -> Result<()> {
        self.check(channel)?;
        self.channels[channel] = None;
        Ok(())
    }

    fn advance(&mut self) {
        if let ClockMode::Tick = self.mode {
            for (ch, slot) in self.channels.iter_mut().enumerate() {
                if let Some(running) = slot {
                    if running.cycles_completed < running.cycles_total {
                        running.cycles_completed += 1;
                        self.cycles_run[ch] += 1;
                    }
                }
            }
        }
    }
}
