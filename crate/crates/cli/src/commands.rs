//! Subcommand implementations.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cyclekit::dsl::{compile, enumerate_space, SpaceConfig};
use cyclekit::eval::{evaluate_matrix, FeatureMatrix, ResampleConfig};
use cyclekit::fleet::{demo_speed_trace, plan_fleet, simulate_cell, FleetConfig};
use cyclekit::forest;
use cyclekit::pipeline::{
    cycle_life, fixture_samples, knee_label, nominal_capacity, parse_xps_csv, run_task,
    xps_patterns, CycleLife, KneeConfig, LifeLabelConfig, RocCurve, TaskConfig, TaskData, TaskKind,
};
use cyclekit::protocol::{
    fit_hmm, postprocess, sample_protocol, speed_to_power, FitOptions, GaussianHmm, SpeedTrace,
};
use cyclekit::sched::{
    load_spec_queues, recover_sim, run_campaign_sim, run_campaign_threaded, write_log_jsonl,
    CampaignConfig, CyclerBackend, VirtualCycler,
};
use cyclekit::sim::{io as sim_io, CellHistory, CellParams, EndReason};

use crate::config::RunConfig;
use crate::ValidationError;

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn space_config(cfg: &RunConfig) -> SpaceConfig {
    SpaceConfig {
        cycle_groups: cfg.features.cycle_groups,
        segments: cfg.features.segments,
        early_cycles: cfg.features.early_cycles,
        ..SpaceConfig::default()
    }
}

fn resample_config(cfg: &RunConfig) -> ResampleConfig {
    ResampleConfig {
        grid_len: cfg.features.grid_len,
        ..ResampleConfig::default()
    }
}

fn fleet_config(cfg: &RunConfig) -> FleetConfig {
    FleetConfig {
        n_cells: cfg.fleet.cells,
        temperatures_c: cfg.fleet.temperatures_c.clone(),
        knee_fraction: cfg.fleet.knee_fraction,
        base_seed: cfg.fleet.base_seed,
        cap_w: cfg.protocol.cap_w,
        zero_keep_ratio: cfg.protocol.zero_keep_ratio,
        protocol_duration_s: cfg.protocol.sample_duration_s,
        protocol_step_s: cfg.protocol.sample_step_s,
        max_cycles: cfg.fleet.max_cycles,
        dt_s: cfg.fleet.dt_s,
        ..FleetConfig::default()
    }
}

fn life_label_config(cfg: &RunConfig) -> LifeLabelConfig {
    LifeLabelConfig {
        eol_fraction: cfg.tasks.eol_fraction,
        early_window: cfg.features.early_cycles as usize,
        min_cycles: cfg.tasks.min_cycles,
        ..LifeLabelConfig::default()
    }
}

fn knee_config(cfg: &RunConfig) -> KneeConfig {
    KneeConfig {
        interval: cfg.tasks.knee_interval,
        threshold: cfg.tasks.knee_threshold,
        mode: cfg.tasks.knee_mode.into(),
    }
}

fn task_config(cfg: &RunConfig) -> TaskConfig {
    TaskConfig {
        n_seeds: cfg.tasks.seeds,
        base_seed: cfg.tasks.base_seed,
        train_fraction: cfg.tasks.train_fraction,
        n_trees: cfg.tasks.n_trees,
        ..TaskConfig::default()
    }
}

/// Build the cell-scale power model from a speed trace (or the built-in
/// demonstration profile).
fn power_model(cfg: &RunConfig, speed_csv: Option<&Path>) -> Result<GaussianHmm> {
    let speed = match speed_csv {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading speed trace {}", path.display()))?;
            SpeedTrace::from_csv(&text).map_err(ValidationError::wrap)?
        }
        None => demo_speed_trace(1800.0, cfg.protocol.seed),
    };
    let pack = speed_to_power(&speed, &cfg.vehicle.to_params())?;
    let cell = pack
        .scaled_to_mean(cfg.protocol.mean_power_w)
        .clipped(0.0, cfg.protocol.cap_w);
    let fit = fit_hmm(
        &cell,
        &FitOptions {
            n_states: cfg.protocol.n_states,
            seed: cfg.protocol.seed,
            ..Default::default()
        },
    )?;
    Ok(fit.model)
}

// ---------------------------------------------------------------------
// gen-protocol
// ---------------------------------------------------------------------

pub fn gen_protocol(
    cfg: &RunConfig,
    speed_csv: Option<&Path>,
    out_dir: &Path,
    count: usize,
) -> Result<()> {
    if count == 0 {
        return Err(ValidationError::new("--count must be >= 1"));
    }
    ensure_dir(out_dir)?;
    let model = power_model(cfg, speed_csv)?;
    fs::write(out_dir.join("model.json"), model.to_json()?)?;
    for k in 0..count {
        let seed = cfg.protocol.seed.wrapping_add(k as u64);
        let raw = sample_protocol(
            &model,
            cfg.protocol.sample_duration_s,
            cfg.protocol.sample_step_s,
            seed,
        )?;
        let spec = postprocess(
            &raw,
            cfg.protocol.cap_w,
            cfg.protocol.zero_keep_ratio,
            format!("protocol-{:04}", k),
            seed,
        )?;
        let path = out_dir.join(format!("protocol_{:04}.json", k));
        fs::write(&path, serde_json::to_string_pretty(&spec)?)?;
    }
    println!(
        "wrote model.json and {} protocol files to {}",
        count,
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    cells: Vec<CellEntry>,
}

#[derive(Serialize, Deserialize)]
struct CellEntry {
    cell_id: String,
    knee_constructed: bool,
    end_reason: EndReason,
    n_cycles: usize,
    params: CellParams,
}

pub fn simulate(cfg: &RunConfig, speed_csv: Option<&Path>, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let model = power_model(cfg, speed_csv)?;
    let fleet = fleet_config(cfg);
    let cells = plan_fleet(&fleet);
    let mut entries = Vec::with_capacity(cells.len());
    for cell in &cells {
        let history = simulate_cell(&fleet, &model, cell)?;
        let path = out_dir.join(format!("{}.jsonl", cell.cell_id));
        let mut out = BufWriter::new(fs::File::create(&path)?);
        sim_io::write_history_jsonl(&mut out, &history)?;
        out.flush()?;
        println!(
            "simulated {}: {} cycles, end {:?}",
            cell.cell_id,
            history.cycles.len(),
            history.end_reason
        );
        entries.push(CellEntry {
            cell_id: cell.cell_id.clone(),
            knee_constructed: cell.knee_constructed,
            end_reason: history.end_reason,
            n_cycles: history.cycles.len(),
            params: cell.params.clone(),
        });
    }
    let manifest = DatasetManifest { cells: entries };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("dataset written to {}", out_dir.display());
    Ok(())
}

fn read_dataset(dir: &Path) -> Result<(Vec<CellHistory>, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: DatasetManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))
            .map_err(|e| ValidationError::new(e.to_string()))?,
    )?;
    let mut histories = Vec::with_capacity(manifest.cells.len());
    for entry in &manifest.cells {
        let path = dir.join(format!("{}.jsonl", entry.cell_id));
        let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let meta = sim_io::HistoryMeta {
            cell_id: entry.cell_id.clone(),
            params: entry.params.clone(),
            end_reason: entry.end_reason,
        };
        histories.push(sim_io::read_history_jsonl(BufReader::new(file), meta)?);
    }
    Ok((histories, manifest))
}

// ---------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------

pub fn featurize(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let (histories, _) = read_dataset(dataset)?;
    let space = enumerate_space(&space_config(cfg))?;
    let plan = compile(&space)?;
    let usable: Vec<CellHistory> = histories
        .into_iter()
        .filter(|h| {
            let ok = h.cycles.len() >= cfg.features.early_cycles as usize;
            if !ok {
                println!(
                    "skipping {}: {} cycles, {} required",
                    h.cell_id,
                    h.cycles.len(),
                    cfg.features.early_cycles
                );
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(ValidationError::new(format!(
            "no cell in {} has {} cycles",
            dataset.display(),
            cfg.features.early_cycles
        )));
    }
    let matrix = evaluate_matrix(
        &plan,
        &usable,
        cfg.features.early_cycles as usize,
        &resample_config(cfg),
    )?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    let mut file = BufWriter::new(fs::File::create(out)?);
    matrix.write_csv(&mut file)?;
    file.flush()?;
    println!(
        "wrote {} rows × {} feature columns to {}",
        matrix.n_rows(),
        matrix.n_cols(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// label
// ---------------------------------------------------------------------

pub fn label(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let (histories, manifest) = read_dataset(dataset)?;
    let life_cfg = life_label_config(cfg);
    let knee_cfg = knee_config(cfg);
    let mut lines = vec![
        "cell_id,nominal_ah,life,censored,knee,knee_constructed,max_slope,max_slope_change"
            .to_string(),
    ];
    for (history, entry) in histories.iter().zip(&manifest.cells) {
        let nominal = nominal_capacity(history, life_cfg.nominal_window)?;
        let (life, censored) = match cycle_life(history, &life_cfg)? {
            CycleLife::Life(n) => (n.to_string(), false),
            CycleLife::Censored => (String::new(), true),
        };
        let (knee, max_slope, max_change) = match knee_label(history, &knee_cfg) {
            Ok((flag, slopes)) => {
                let max_slope = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let max_change = slopes
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::NEG_INFINITY, f64::max);
                (flag.to_string(), format!("{:.6}", max_slope), format!("{:.6}", max_change))
            }
            Err(_) => (String::new(), String::new(), String::new()),
        };
        lines.push(format!(
            "{},{:.6},{},{},{},{},{},{}",
            history.cell_id, nominal, life, censored, knee, entry.knee_constructed, max_slope, max_change
        ));
    }
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    fs::write(out, lines.join("\n") + "\n")?;
    println!("wrote {} label rows to {}", lines.len() - 1, out.display());
    Ok(())
}

#[derive(Debug, Clone)]
struct Labels {
    life: HashMap<String, f64>,
    knee: HashMap<String, bool>,
}

fn read_labels(path: &Path) -> Result<Labels> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))
        .map_err(|e| ValidationError::new(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| ValidationError::new("empty labels CSV"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| ValidationError::new(format!("labels CSV lacks column `{}`", name)))
    };
    let (id_c, life_c, cen_c, knee_c) = (idx("cell_id")?, idx("life")?, idx("censored")?, idx("knee")?);
    let mut life = HashMap::new();
    let mut knee = HashMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let id = fields[id_c].to_string();
        if fields[cen_c] != "true" && !fields[life_c].is_empty() {
            life.insert(id.clone(), fields[life_c].parse::<f64>()?);
        }
        if let Ok(flag) = fields[knee_c].parse::<bool>() {
            knee.insert(id, flag);
        }
    }
    Ok(Labels { life, knee })
}

fn join_task_data(
    features: &FeatureMatrix,
    targets: &HashMap<String, f64>,
    n_classes: usize,
    min_life: Option<f64>,
) -> Result<(TaskData, usize)> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut skipped = 0;
    for (r, id) in features.cell_ids().iter().enumerate() {
        match targets.get(id) {
            Some(&value) if min_life.map_or(true, |m| value >= m) => {
                rows.push(r);
                y.push(value);
            }
            _ => skipped += 1,
        }
    }
    Ok((
        TaskData {
            x: features.subset_rows(&rows),
            y,
            n_classes,
        },
        skipped,
    ))
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

pub fn train(
    cfg: &RunConfig,
    features_path: &Path,
    labels_path: &Path,
    task: TaskKind,
    out: &Path,
    importances_out: Option<&Path>,
) -> Result<()> {
    let features = FeatureMatrix::read_csv(BufReader::new(
        fs::File::open(features_path)
            .with_context(|| format!("opening {}", features_path.display()))
            .map_err(|e| ValidationError::new(e.to_string()))?,
    ))?;
    let labels = read_labels(labels_path)?;
    let (data, skipped) = match task {
        TaskKind::Life => join_task_data(
            &features,
            &labels.life,
            0,
            Some(cfg.tasks.min_cycles as f64),
        )?,
        TaskKind::Knee => {
            let targets: HashMap<String, f64> = labels
                .knee
                .iter()
                .map(|(k, &v)| (k.clone(), v as u8 as f64))
                .collect();
            join_task_data(&features, &targets, 2, None)?
        }
        TaskKind::Pattern => {
            return Err(ValidationError::new(
                "train supports life and knee; pattern labels come from cluster-xps + evaluate",
            ))
        }
    };
    if skipped > 0 {
        println!("skipped {} unlabeled/filtered cells", skipped);
    }
    let fcfg = forest::ForestConfig {
        n_trees: cfg.tasks.n_trees,
        seed: cfg.tasks.base_seed,
        ..match task {
            TaskKind::Life => forest::ForestConfig::regression(0),
            _ => forest::ForestConfig::classification(0),
        }
    };
    let model = forest::fit(&data.x, &data.y, &fcfg)?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    fs::write(out, model.to_json()?)?;
    println!("trained on {} cells; model written to {}", data.y.len(), out.display());
    if let Some(path) = importances_out {
        let report = model.importances(data.x.names())?;
        fs::write(path, report.table(20))?;
        println!("top-20 importances written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------

fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut text = String::from("fpr,tpr\n");
    for (fpr, tpr) in &curve.points {
        text.push_str(&format!("{},{}\n", fpr, tpr));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn evaluate(
    cfg: &RunConfig,
    features_path: &Path,
    labels_path: Option<&Path>,
    patterns_path: Option<&Path>,
    task: TaskKind,
    out: &Path,
    curves_dir: Option<&Path>,
) -> Result<()> {
    let features = FeatureMatrix::read_csv(BufReader::new(
        fs::File::open(features_path)
            .with_context(|| format!("opening {}", features_path.display()))
            .map_err(|e| ValidationError::new(e.to_string()))?,
    ))?;
    let (data, skipped) = match task {
        TaskKind::Life => {
            let labels = read_labels(labels_path.ok_or_else(|| {
                ValidationError::new("--labels is required for the life task")
            })?)?;
            join_task_data(&features, &labels.life, 0, Some(cfg.tasks.min_cycles as f64))?
        }
        TaskKind::Knee => {
            let labels = read_labels(labels_path.ok_or_else(|| {
                ValidationError::new("--labels is required for the knee task")
            })?)?;
            let targets: HashMap<String, f64> = labels
                .knee
                .iter()
                .map(|(k, &v)| (k.clone(), v as u8 as f64))
                .collect();
            join_task_data(&features, &targets, 2, None)?
        }
        TaskKind::Pattern => {
            let path = patterns_path.ok_or_else(|| {
                ValidationError::new("--patterns is required for the pattern task")
            })?;
            let patterns: cyclekit::pipeline::XpsPatterns = serde_json::from_str(
                &fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(|e| ValidationError::new(e.to_string()))?,
            )?;
            let mut targets = HashMap::new();
            let mut n_classes = 0;
            for p in &patterns.patterns {
                n_classes = n_classes.max(p.number);
                for tag in &p.member_tags {
                    targets.insert(tag.clone(), (p.number - 1) as f64);
                }
            }
            join_task_data(&features, &targets, n_classes, None)?
        }
    };
    if skipped > 0 {
        println!("skipped {} unlabeled/filtered cells", skipped);
    }
    let report = run_task(task, &data, &task_config(cfg))?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    fs::write(out, report.to_json()?)?;
    println!("evaluation report written to {}", out.display());

    if let Some(dir) = curves_dir {
        ensure_dir(dir)?;
        if !report.cum_mae_curve.is_empty() {
            let mut text = String::from("n_test_cells,cumulated_mae\n");
            for (k, v) in report.cum_mae_curve.iter().enumerate() {
                text.push_str(&format!("{},{}\n", k + 1, v));
            }
            fs::write(dir.join("cum_mae.csv"), text)?;
        }
        for (class, curve) in report.roc_per_class.iter().enumerate() {
            let name = match task {
                TaskKind::Pattern => format!("roc_pattern_{}.csv", class + 1),
                _ => format!("roc_class_{}.csv", class),
            };
            write_roc_csv(&dir.join(name), curve)?;
        }
        println!("curve files written to {}", dir.display());
    }

    if let Some(ms) = &report.test_mape {
        println!("test MAPE {:.2} ± {:.2}", ms.mean, ms.sd);
    }
    if let Some(ms) = &report.test_accuracy {
        println!("test accuracy {:.3} ± {:.3}", ms.mean, ms.sd);
    }
    if let Some(auc) = report.pooled_macro_auc {
        println!("pooled macro AUC {:.3}", auc);
    }
    Ok(())
}

// ---------------------------------------------------------------------
// cluster-xps
// ---------------------------------------------------------------------

pub fn cluster_xps(
    use_fixture: bool,
    csv: Option<&Path>,
    k: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let (samples, anchored) = if use_fixture {
        (fixture_samples(), true)
    } else {
        let path = csv.ok_or_else(|| {
            ValidationError::new("either --fixture or --csv <path> is required")
        })?;
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| ValidationError::new(e.to_string()))?;
        (parse_xps_csv(&text, 0.5).map_err(ValidationError::wrap)?, false)
    };
    let result = xps_patterns(&samples, k, seed, 64, anchored)?;
    println!("{} samples clustered into k = {} groups", samples.len(), k);
    for p in &result.patterns {
        println!(
            "pattern {} ({}): {} cells",
            p.number,
            p.label.as_deref().unwrap_or("unnamed"),
            p.member_tags.len()
        );
    }
    println!(
        "{} retained patterns, {} excluded singleton(s): {:?}",
        result.patterns.len(),
        result.excluded.len(),
        result.excluded
    );
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            ensure_dir(parent)?;
        }
        fs::write(path, serde_json::to_string_pretty(&result)?)?;
        println!("pattern assignment written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn schedule(
    queues_dir: &Path,
    out_dir: &Path,
    cycles_per_spec: u64,
    recover: bool,
    wall: bool,
    poll_ms: u64,
    campaign_id: &str,
    fail_channel: Option<usize>,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let queues = load_spec_queues(queues_dir).map_err(ValidationError::wrap)?;
    let mut cfg = CampaignConfig::new(campaign_id, out_dir.join("checkpoint.json"));
    cfg.cycles_per_spec = cycles_per_spec;

    let outcome = if wall {
        let mut backend = VirtualCycler::wall_clock(queues.len(), poll_ms as f64 / 1000.0);
        if let Some(ch) = fail_channel {
            backend.fail_after(ch, cycles_per_spec / 2);
        }
        let backend: std::sync::Arc<std::sync::Mutex<dyn CyclerBackend>> =
            std::sync::Arc::new(std::sync::Mutex::new(backend));
        run_campaign_threaded(
            backend,
            &queues,
            &cfg,
            std::time::Duration::from_millis(poll_ms),
        )?
    } else {
        let mut backend = VirtualCycler::simulated(queues.len());
        if let Some(ch) = fail_channel {
            backend.fail_after(ch, cycles_per_spec / 2);
        }
        if recover {
            recover_sim(&mut backend, &queues, &cfg)?
        } else {
            run_campaign_sim(&mut backend, &queues, &cfg, None)?
        }
    };

    write_log_jsonl(&out_dir.join("campaign_log.jsonl"), &outcome.log)?;
    println!(
        "campaign `{}`: {} channels, {} spec executions logged, {} ticks",
        campaign_id,
        queues.len(),
        outcome.log.len(),
        outcome.ticks
    );
    for summary in &outcome.log {
        println!(
            "  channel {} spec {} cycles {} status {:?}",
            summary.channel, summary.spec_id, summary.cycles_run, summary.end_status
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SummaryEntry {
    source: String,
    task: String,
    n_cells: usize,
    n_features: usize,
    test_mape_mean: Option<f64>,
    test_mape_sd: Option<f64>,
    test_rmse_mean: Option<f64>,
    test_accuracy_mean: Option<f64>,
    pooled_macro_auc: Option<f64>,
}

pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(ValidationError::new("report needs at least one evaluation JSON"));
    }
    ensure_dir(out_dir)?;
    let mut entries = Vec::new();
    for path in inputs {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| ValidationError::new(e.to_string()))?;
        let report = cyclekit::pipeline::EvalReport::from_json(&text)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report")
            .to_string();
        if !report.cum_mae_curve.is_empty() {
            let mut csv = String::from("n_test_cells,cumulated_mae\n");
            for (k, v) in report.cum_mae_curve.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", k + 1, v));
            }
            fs::write(out_dir.join(format!("cum_mae_{}.csv", stem)), csv)?;
        }
        for (class, curve) in report.roc_per_class.iter().enumerate() {
            write_roc_csv(
                &out_dir.join(format!("roc_{}_{}.csv", stem, class)),
                curve,
            )?;
        }
        entries.push(SummaryEntry {
            source: path.display().to_string(),
            task: format!("{:?}", report.task),
            n_cells: report.n_cells,
            n_features: report.n_features,
            test_mape_mean: report.test_mape.as_ref().map(|m| m.mean),
            test_mape_sd: report.test_mape.as_ref().map(|m| m.sd),
            test_rmse_mean: report.test_rmse.as_ref().map(|m| m.mean),
            test_accuracy_mean: report.test_accuracy.as_ref().map(|m| m.mean),
            pooled_macro_auc: report.pooled_macro_auc,
        });
    }
    let summary = serde_json::to_string_pretty(&entries)?;
    fs::write(out_dir.join("summary.json"), summary)?;
    println!(
        "summary of {} report(s) written to {}",
        entries.len(),
        out_dir.join("summary.json").display()
    );
    Ok(())
}

// Re-exported so `main` can classify errors uniformly.
pub fn classify_exit(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ValidationError>().is_some() {
        return 1;
    }
    if let Some(core) = err.downcast_ref::<cyclekit::Error>() {
        return match core {
            cyclekit::Error::InvalidInput(_)
            | cyclekit::Error::Parse { .. }
            | cyclekit::Error::Validation(_) => 1,
            _ => 2,
        };
    }
    2
}

