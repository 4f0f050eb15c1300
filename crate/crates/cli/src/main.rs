//! `cyclekit` — batch pipeline for battery degradation studies under
//! randomized cyclic protocols: protocol generation, fleet simulation,
//! feature-space construction, labeling, model training/evaluation,
//! composition clustering, and campaign scheduling.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments, bad config,
//! malformed inputs), 2 runtime error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use cyclekit::pipeline::TaskKind;

/// Validation failures exit with code 1.
#[derive(Debug)]
pub struct ValidationError(String);

impl ValidationError {
    pub fn new(msg: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(ValidationError(msg.into()))
    }

    pub fn wrap(err: cyclekit::Error) -> anyhow::Error {
        anyhow::Error::new(ValidationError(err.to_string()))
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ValidationError {}

#[derive(Parser)]
#[command(name = "cyclekit", version, about)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the stage seeds (protocol, fleet, and task base seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the worker-thread count.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskName {
    Life,
    Knee,
    Pattern,
}

impl From<TaskName> for TaskKind {
    fn from(value: TaskName) -> Self {
        match value {
            TaskName::Life => TaskKind::Life,
            TaskName::Knee => TaskKind::Knee,
            TaskName::Pattern => TaskKind::Pattern,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the power model from a speed trace and sample protocol files.
    GenProtocol {
        /// Speed trace CSV (`time_s,speed_mps`); a built-in demonstration
        /// profile is used when omitted.
        #[arg(long)]
        speed_csv: Option<PathBuf>,
        /// Output directory for `model.json` and `protocol_*.json`.
        #[arg(long)]
        out: PathBuf,
        /// Number of protocols to sample.
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Simulate a synthetic fleet into per-cell JSONL records.
    Simulate {
        #[arg(long)]
        speed_csv: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Override `fleet.cells` from the config.
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Evaluate the full feature space over a dataset into a CSV matrix.
    Featurize {
        /// Dataset directory produced by `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute nominal capacity, cycle life, and knee labels for a dataset.
    Label {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one forest on a feature matrix and labels; save the model.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum)]
        task: TaskName,
        #[arg(long)]
        out: PathBuf,
        /// Also write the top-20 importance table here.
        #[arg(long)]
        importances: Option<PathBuf>,
    },
    /// Multi-seed train/test evaluation; writes a report JSON and curves.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Pattern assignment JSON (from `cluster-xps`) for the pattern task.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: TaskName,
        #[arg(long)]
        out: PathBuf,
        /// Directory for `cum_mae.csv` / `roc_*.csv` plot data.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Cluster surface compositions into interfacial-chemistry patterns.
    ClusterXps {
        /// Use the bundled 56-cell reference dataset.
        #[arg(long)]
        fixture: bool,
        /// Composition CSV (same columns as the bundled dataset).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Output JSON for the pattern assignment.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run (or resume) a batch-testing campaign against the virtual cycler.
    Schedule {
        /// Directory of per-channel spec queues (`channel_*/NNN.json`).
        #[arg(long)]
        queues: PathBuf,
        /// Output directory for the checkpoint and campaign log.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        cycles_per_spec: u64,
        /// Resume from the checkpoint in the output directory.
        #[arg(long)]
        recover: bool,
        /// Wall-clock threaded mode instead of the simulated clock.
        #[arg(long)]
        wall: bool,
        /// Poll interval in milliseconds (wall mode).
        #[arg(long, default_value_t = 20)]
        poll_ms: u64,
        #[arg(long, default_value = "campaign")]
        id: String,
        /// Inject a hardware fault on this channel (demonstration).
        #[arg(long)]
        fail_channel: Option<usize>,
    },
    /// Collate evaluation reports into one summary plus curve CSVs.
    Report {
        /// Evaluation JSON files.
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .ok();
    }
    let mut cfg =
        RunConfig::load(cli.config.as_deref()).map_err(|e| ValidationError::new(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.protocol.seed = seed;
        cfg.fleet.base_seed = seed;
        cfg.tasks.base_seed = seed;
    }

    match cli.command {
        Command::GenProtocol { speed_csv, out, count } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::gen_protocol(&cfg, speed_csv.as_deref(), &out, count)
        }
        Command::Simulate { speed_csv, out, cells } => {
            if let Some(cells) = cells {
                cfg.fleet.cells = cells;
            }
            cfg.validate().map_err(|e| ValidationError::new(e.to_string()))?;
            eprintln!("resolved config:\n{}", cfg.render());
            commands::simulate(&cfg, speed_csv.as_deref(), &out)
        }
        Command::Featurize { dataset, out } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::featurize(&cfg, &dataset, &out)
        }
        Command::Label { dataset, out } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::label(&cfg, &dataset, &out)
        }
        Command::Train {
            features,
            labels,
            task,
            out,
            importances,
        } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::train(&cfg, &features, &labels, task.into(), &out, importances.as_deref())
        }
        Command::Evaluate {
            features,
            labels,
            patterns,
            task,
            out,
            curves,
        } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::evaluate(
                &cfg,
                &features,
                labels.as_deref(),
                patterns.as_deref(),
                task.into(),
                &out,
                curves.as_deref(),
            )
        }
        Command::ClusterXps { fixture, csv, k, out } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::cluster_xps(fixture, csv.as_deref(), k, cfg.tasks.base_seed, out.as_deref())
        }
        Command::Schedule {
            queues,
            out,
            cycles_per_spec,
            recover,
            wall,
            poll_ms,
            id,
            fail_channel,
        } => {
            eprintln!("resolved config:\n{}", cfg.render());
            commands::schedule(
                &queues,
                &out,
                cycles_per_spec,
                recover,
                wall,
                poll_ms,
                &id,
                fail_channel,
            )
        }
        Command::Report { inputs, out } => commands::report(&inputs, &out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successes; anything else is validation.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {:#}", err);
            std::process::exit(commands::classify_exit(&err));
        }
    }
}
