//! Campaign execution: deterministic single-threaded stepping on the
//! simulated clock (the tested path) and a threaded wall-clock mode with
//! one monitor thread per running spec.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ProtocolSpec;

use super::checkpoint::{load_checkpoint, write_checkpoint_atomic, Checkpoint};
use super::{CyclerBackend, EndStatus, RunSummary};

/// Campaign-level configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub campaign_id: String,
    /// Simulated cycles each spec runs for.
    pub cycles_per_spec: u64,
    /// Poll / checkpoint cadence in ticks (simulated clock).
    pub poll_interval_ticks: u64,
    pub checkpoint_path: PathBuf,
    /// Safety bound on the simulated clock.
    pub max_ticks: u64,
    /// Resume an interrupted spec at its recorded cycle count; when
    /// false, interrupted specs restart from cycle zero.
    pub resume_mid_spec: bool,
}

impl CampaignConfig {
    pub fn new(campaign_id: impl Into<String>, checkpoint_path: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            campaign_id: campaign_id.into(),
            cycles_per_spec: 10,
            poll_interval_ticks: 1,
            checkpoint_path: checkpoint_path.into(),
            max_ticks: 1_000_000,
            resume_mid_spec: true,
        }
    }
}

/// Result of a campaign run (or a crashed partial run).
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub checkpoint: Checkpoint,
    /// Completed-spec summaries, derived from the durable checkpoint.
    pub log: Vec<RunSummary>,
    pub ticks: u64,
    /// True when a simulated crash cut the run short.
    pub crashed: bool,
}

/// Read per-channel spec queues from a directory: one `channel_*`
/// subdirectory per channel (lexicographic), each holding protocol JSON
/// files consumed in lexicographic order.
pub fn load_spec_queues(dir: &Path) -> Result<Vec<Vec<ProtocolSpec>>> {
    let mut channel_dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map_or(false, |n| n.starts_with("channel_"))
        })
        .collect();
    channel_dirs.sort();
    if channel_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no channel_* subdirectories",
            dir.display()
        )));
    }
    let mut queues = Vec::with_capacity(channel_dirs.len());
    for ch_dir in channel_dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&ch_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
            .collect();
        files.sort();
        let mut queue = Vec::with_capacity(files.len());
        for file in files {
            let text = std::fs::read_to_string(&file)?;
            let spec: ProtocolSpec = serde_json::from_str(&text).map_err(|e| {
                Error::invalid(format!("{}: bad protocol spec: {}", file.display(), e))
            })?;
            queue.push(spec);
        }
        queues.push(queue);
    }
    Ok(queues)
}

/// Per-channel live state of the master.
struct ChannelState {
    queue_pos: usize,
    cycles_completed: u64,
    started_tick: u64,
    completed: Vec<RunSummary>,
    failed: bool,
    active: bool,
}

impl ChannelState {
    fn done(&self, queue_len: usize) -> bool {
        self.failed || (!self.active && self.queue_pos >= queue_len)
    }
}

fn to_checkpoint(
    cfg: &CampaignConfig,
    states: &[ChannelState],
    queues: &[Vec<ProtocolSpec>],
    tick: u64,
) -> Checkpoint {
    Checkpoint {
        version: super::CHECKPOINT_VERSION,
        campaign_id: cfg.campaign_id.clone(),
        written_at_tick: tick,
        channels: states
            .iter()
            .enumerate()
            .map(|(ch, s)| super::ChannelCheckpoint {
                channel: ch,
                queue_pos: s.queue_pos,
                current_spec_id: if s.active {
                    Some(queues[ch][s.queue_pos].protocol_id.clone())
                } else {
                    None
                },
                cycles_completed: s.cycles_completed,
                started_tick: s.started_tick,
                completed: s.completed.clone(),
                failed: s.failed,
            })
            .collect(),
    }
}

fn run_sim_from(
    backend: &mut dyn CyclerBackend,
    queues: &[Vec<ProtocolSpec>],
    cfg: &CampaignConfig,
    initial: Checkpoint,
    crash_at_tick: Option<u64>,
) -> Result<CampaignOutcome> {
    if queues.is_empty() {
        return Err(Error::invalid("campaign needs at least one channel"));
    }
    if initial.channels.len() != queues.len() {
        return Err(Error::Checkpoint {
            path: cfg.checkpoint_path.display().to_string(),
            message: format!(
                "checkpoint has {} channels, queues have {}",
                initial.channels.len(),
                queues.len()
            ),
        });
    }

    let mut tick = initial.written_at_tick;
    let mut states: Vec<ChannelState> = initial
        .channels
        .iter()
        .map(|c| ChannelState {
            queue_pos: c.queue_pos,
            cycles_completed: if cfg.resume_mid_spec { c.cycles_completed } else { 0 },
            started_tick: c.started_tick,
            completed: c.completed.clone(),
            failed: c.failed,
            active: false,
        })
        .collect();

    // Master assigns the current spec of every channel with work left.
    for (ch, state) in states.iter_mut().enumerate() {
        if state.failed || state.queue_pos >= queues[ch].len() {
            continue;
        }
        backend.start(
            ch,
            &queues[ch][state.queue_pos],
            cfg.cycles_per_spec,
            state.cycles_completed,
        )?;
        state.active = true;
    }
    write_checkpoint_atomic(&cfg.checkpoint_path, &to_checkpoint(cfg, &states, queues, tick))?;

    while states.iter().enumerate().any(|(ch, s)| !s.done(queues[ch].len())) {
        if tick >= cfg.max_ticks {
            return Err(Error::invalid(format!(
                "campaign exceeded max_ticks {}",
                cfg.max_ticks
            )));
        }
        tick += 1;
        backend.advance();
        if crash_at_tick == Some(tick) {
            // Simulated power loss: live state evaporates; only the last
            // checkpoint file survives.
            let checkpoint = load_checkpoint(&cfg.checkpoint_path)?.expect("checkpoint written");
            let log = checkpoint.all_summaries();
            return Ok(CampaignOutcome {
                checkpoint,
                log,
                ticks: tick,
                crashed: true,
            });
        }
        if tick % cfg.poll_interval_ticks.max(1) != 0 {
            continue;
        }

        for ch in 0..queues.len() {
            if !states[ch].active {
                continue;
            }
            match backend.poll(ch) {
                Err(_) => {
                    // Hardware fault: the channel is marked failed and the
                    // rest of the campaign continues.
                    let state = &mut states[ch];
                    state.completed.push(RunSummary {
                        channel: ch,
                        spec_id: queues[ch][state.queue_pos].protocol_id.clone(),
                        cycles_run: state.cycles_completed,
                        started_tick: state.started_tick,
                        ended_tick: tick,
                        end_status: EndStatus::Failed,
                    });
                    state.failed = true;
                    state.active = false;
                    let _ = backend.stop(ch);
                }
                Ok(status) => {
                    let state = &mut states[ch];
                    state.cycles_completed = status.cycles_completed;
                    if status.done {
                        state.completed.push(RunSummary {
                            channel: ch,
                            spec_id: status.spec_id.clone(),
                            cycles_run: status.cycles_completed,
                            started_tick: state.started_tick,
                            ended_tick: tick,
                            end_status: EndStatus::Completed,
                        });
                        backend.stop(ch)?;
                        state.queue_pos += 1;
                        state.cycles_completed = 0;
                        state.started_tick = tick;
                        if state.queue_pos < queues[ch].len() {
                            // The master launches the next monitor.
                            backend.start(ch, &queues[ch][state.queue_pos], cfg.cycles_per_spec, 0)?;
                        } else {
                            state.active = false;
                        }
                    }
                }
            }
        }
        write_checkpoint_atomic(&cfg.checkpoint_path, &to_checkpoint(cfg, &states, queues, tick))?;
    }

    let checkpoint = to_checkpoint(cfg, &states, queues, tick);
    write_checkpoint_atomic(&cfg.checkpoint_path, &checkpoint)?;
    let log = checkpoint.all_summaries();
    Ok(CampaignOutcome {
        checkpoint,
        log,
        ticks: tick,
        crashed: false,
    })
}

/// Run a campaign on the simulated clock, single-threaded and
/// deterministic. `crash_at_tick` injects a power loss after that tick's
/// hardware advance (checkpoints from earlier ticks survive).
pub fn run_campaign_sim(
    backend: &mut dyn CyclerBackend,
    queues: &[Vec<ProtocolSpec>],
    cfg: &CampaignConfig,
    crash_at_tick: Option<u64>,
) -> Result<CampaignOutcome> {
    let initial = Checkpoint::fresh(cfg.campaign_id.clone(), queues.len());
    run_sim_from(backend, queues, cfg, initial, crash_at_tick)
}

/// Resume a campaign from its checkpoint file. Completed specs are not
/// re-run; the in-flight spec resumes at its recorded cycle count (or
/// restarts, per config). With no checkpoint present this is a fresh
/// campaign.
pub fn recover_sim(
    backend: &mut dyn CyclerBackend,
    queues: &[Vec<ProtocolSpec>],
    cfg: &CampaignConfig,
) -> Result<CampaignOutcome> {
    let initial = match load_checkpoint(&cfg.checkpoint_path)? {
        Some(ckpt) => {
            if ckpt.campaign_id != cfg.campaign_id {
                return Err(Error::Checkpoint {
                    path: cfg.checkpoint_path.display().to_string(),
                    message: format!(
                        "checkpoint belongs to campaign `{}`, expected `{}`",
                        ckpt.campaign_id, cfg.campaign_id
                    ),
                });
            }
            ckpt
        }
        None => Checkpoint::fresh(cfg.campaign_id.clone(), queues.len()),
    };
    run_sim_from(backend, queues, cfg, initial, None)
}

enum MonitorMsg {
    Progress(usize, u64),
    Done(usize, RunSummary),
    Fault(usize, RunSummary),
}

/// Threaded wall-clock mode: one monitor thread per running spec polls the
/// shared backend and reports to the master (this thread), which owns the
/// checkpoint and launches follow-up monitors.
pub fn run_campaign_threaded(
    backend: Arc<Mutex<dyn CyclerBackend>>,
    queues: &[Vec<ProtocolSpec>],
    cfg: &CampaignConfig,
    poll_interval: Duration,
) -> Result<CampaignOutcome> {
    if queues.is_empty() {
        return Err(Error::invalid("campaign needs at least one channel"));
    }
    let (tx, rx) = mpsc::channel::<MonitorMsg>();
    let campaign_start = std::time::Instant::now();

    // Wall-mode summaries carry milliseconds since campaign start in the
    // tick fields.
    let spawn_monitor = |channel: usize, spec: ProtocolSpec| {
        let backend = Arc::clone(&backend);
        let tx = tx.clone();
        let cycles_total = cfg.cycles_per_spec;
        let started_tick = campaign_start.elapsed().as_millis() as u64;
        std::thread::spawn(move || {
            let now_ms = move || campaign_start.elapsed().as_millis() as u64;
            {
                let mut b = backend.lock().unwrap();
                if let Err(_) = b.start(channel, &spec, cycles_total, 0) {
                    let _ = tx.send(MonitorMsg::Fault(
                        channel,
                        RunSummary {
                            channel,
                            spec_id: spec.protocol_id.clone(),
                            cycles_run: 0,
                            started_tick,
                            ended_tick: now_ms(),
                            end_status: EndStatus::Failed,
                        },
                    ));
                    return;
                }
            }
            loop {
                std::thread::sleep(poll_interval);
                let status = { backend.lock().unwrap().poll(channel) };
                match status {
                    Err(_) => {
                        let _ = tx.send(MonitorMsg::Fault(
                            channel,
                            RunSummary {
                                channel,
                                spec_id: spec.protocol_id.clone(),
                                cycles_run: 0,
                                started_tick,
                                ended_tick: now_ms(),
                                end_status: EndStatus::Failed,
                            },
                        ));
                        return;
                    }
                    Ok(status) => {
                        let _ = tx.send(MonitorMsg::Progress(channel, status.cycles_completed));
                        if status.done {
                            let _ = backend.lock().unwrap().stop(channel);
                            // The monitor submits its summary and terminates.
                            let _ = tx.send(MonitorMsg::Done(
                                channel,
                                RunSummary {
                                    channel,
                                    spec_id: spec.protocol_id.clone(),
                                    cycles_run: status.cycles_completed,
                                    started_tick,
                                    ended_tick: now_ms(),
                                    end_status: EndStatus::Completed,
                                },
                            ));
                            return;
                        }
                    }
                }
            }
        })
    };

    let mut states: Vec<ChannelState> = queues
        .iter()
        .map(|_| ChannelState {
            queue_pos: 0,
            cycles_completed: 0,
            started_tick: 0,
            completed: Vec::new(),
            failed: false,
            active: false,
        })
        .collect();
    let mut handles = Vec::new();
    for (ch, queue) in queues.iter().enumerate() {
        if let Some(spec) = queue.first() {
            handles.push(spawn_monitor(ch, spec.clone()));
            states[ch].active = true;
        }
    }
    write_checkpoint_atomic(&cfg.checkpoint_path, &to_checkpoint(cfg, &states, queues, 0))?;

    while states.iter().enumerate().any(|(ch, s)| !s.done(queues[ch].len())) {
        let msg = rx
            .recv()
            .map_err(|_| Error::invalid("all monitors exited unexpectedly"))?;
        match msg {
            MonitorMsg::Progress(ch, cycles) => {
                states[ch].cycles_completed = cycles;
            }
            MonitorMsg::Done(ch, summary) => {
                let state = &mut states[ch];
                state.completed.push(summary);
                state.queue_pos += 1;
                state.cycles_completed = 0;
                if state.queue_pos < queues[ch].len() {
                    handles.push(spawn_monitor(ch, queues[ch][state.queue_pos].clone()));
                } else {
                    state.active = false;
                }
            }
            MonitorMsg::Fault(ch, summary) => {
                states[ch].completed.push(summary);
                states[ch].failed = true;
                states[ch].active = false;
            }
        }
        write_checkpoint_atomic(&cfg.checkpoint_path, &to_checkpoint(cfg, &states, queues, 0))?;
    }
    for h in handles {
        let _ = h.join();
    }

    let checkpoint = to_checkpoint(cfg, &states, queues, 0);
    write_checkpoint_atomic(&cfg.checkpoint_path, &checkpoint)?;
    let log = checkpoint.all_summaries();
    Ok(CampaignOutcome {
        checkpoint,
        log,
        ticks: 0,
        crashed: false,
    })
}

/// Write a campaign log as JSON-lines of [`RunSummary`].
pub fn write_log_jsonl(path: &Path, log: &[RunSummary]) -> Result<()> {
    let mut out = String::new();
    for summary in log {
        out.push_str(&serde_json::to_string(summary)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
