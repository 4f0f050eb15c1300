//! Versioned campaign checkpoints with atomic persistence
//! (write-temp-then-rename, so a reader never observes a torn file).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::RunSummary;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Durable state of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCheckpoint {
    pub channel: usize,
    /// Index of the current spec in the channel's queue.
    pub queue_pos: usize,
    pub current_spec_id: Option<String>,
    /// Cycles completed of the current spec.
    pub cycles_completed: u64,
    /// Tick at which the current spec started.
    pub started_tick: u64,
    /// Summaries of every spec this channel has completed, in order.
    pub completed: Vec<RunSummary>,
    pub failed: bool,
}

/// Whole-campaign checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub campaign_id: String,
    pub written_at_tick: u64,
    pub channels: Vec<ChannelCheckpoint>,
}

impl Checkpoint {
    pub fn fresh(campaign_id: impl Into<String>, n_channels: usize) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            campaign_id: campaign_id.into(),
            written_at_tick: 0,
            channels: (0..n_channels)
                .map(|channel| ChannelCheckpoint {
                    channel,
                    queue_pos: 0,
                    current_spec_id: None,
                    cycles_completed: 0,
                    started_tick: 0,
                    completed: Vec::new(),
                    failed: false,
                })
                .collect(),
        }
    }

    /// All completed-spec summaries across channels, channel order then
    /// completion order.
    pub fn all_summaries(&self) -> Vec<RunSummary> {
        self.channels
            .iter()
            .flat_map(|c| c.completed.iter().cloned())
            .collect()
    }
}

/// Atomically persist a checkpoint: serialize, write to a sibling temp
/// file, flush, then rename over the target.
pub fn write_checkpoint_atomic(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let payload = serde_json::to_vec_pretty(checkpoint)?;
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&payload)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Load and validate a checkpoint. A missing file returns `Ok(None)`;
/// unreadable or inconsistent content is an error naming the file.
pub fn load_checkpoint(path: &Path) -> Result<Option<Checkpoint>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => {
            return Err(Error::Checkpoint {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        }
    };
    let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: path.display().to_string(),
        message: format!("corrupt checkpoint: {}", e),
    })?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            path: path.display().to_string(),
            message: format!(
                "unsupported version {} (expected {})",
                checkpoint.version, CHECKPOINT_VERSION
            ),
        });
    }
    Ok(Some(checkpoint))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_is_none_and_corrupt_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        assert!(load_checkpoint(&path).unwrap().is_none());

        std::fs::write(&path, b"{ not json").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("ckpt.json"), "{}", err);

        let mut ckpt = Checkpoint::fresh("c", 2);
        ckpt.version = 99;
        std::fs::write(&path, serde_json::to_vec(&ckpt).unwrap()).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{}", err);
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut ckpt = Checkpoint::fresh("campaign-1", 3);
        ckpt.written_at_tick = 42;
        ckpt.channels[1].queue_pos = 2;
        ckpt.channels[1].cycles_completed = 7;
        write_checkpoint_atomic(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap().unwrap(), ckpt);
    }

    #[test]
    fn concurrent_reader_never_sees_a_torn_file() {
        use std::sync::atomic::{AtomicBool, Ordering};
        use std::sync::Arc;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        write_checkpoint_atomic(&path, &Checkpoint::fresh("torn", 4)).unwrap();

        let stop = Arc::new(AtomicBool::new(false));
        let reader_path = path.clone();
        let reader_stop = Arc::clone(&stop);
        let reader = std::thread::spawn(move || {
            let mut reads = 0u64;
            while !reader_stop.load(Ordering::Relaxed) {
                let loaded = load_checkpoint(&reader_path).expect("reader saw a torn checkpoint");
                assert!(loaded.is_some());
                reads += 1;
            }
            reads
        });

        for tick in 1..=500u64 {
            let mut ckpt = Checkpoint::fresh("torn", 4);
            ckpt.written_at_tick = tick;
            for ch in ckpt.channels.iter_mut() {
                ch.cycles_completed = tick;
                ch.current_spec_id = Some(format!("spec-{}", tick));
            }
            write_checkpoint_atomic(&path, &ckpt).unwrap();
        }
        stop.store(true, Ordering::Relaxed);
        let reads = reader.join().unwrap();
        assert!(reads > 0, "reader never ran");
    }
}
