//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured evidence (run with `--nocapture` to see
//! them). Criteria cover the bundled composition dataset, feature-space
//! integrity and oracle equivalence, the NaN aggregators, two end-to-end
//! synthetic studies, the power-model suite, scheduler crash recovery,
//! the forest, and the metrics.

use cyclekit::dsl::{compile, enumerate_space, parse, SpaceConfig};
use cyclekit::eval::{self, nanstats, FeatureMatrix, ResampleConfig};
use cyclekit::fleet::{demo_power_model, plan_fleet, simulate_cell, FleetConfig};
use cyclekit::forest::{self, ForestConfig, MaxFeatures};
use cyclekit::pipeline::{
    self, cycle_life, fixture_samples, knee_label, reference_centers, roc_auc, seed_splits,
    variance_model, xps_patterns, CycleLife, KneeConfig, LifeLabelConfig, TaskConfig, TaskData,
    TaskKind, ELEMENT_NAMES, PATTERN_ORDER,
};
use cyclekit::protocol::{fit_hmm, postprocess, sample_protocol, FitOptions, GaussianHmm};
use cyclekit::sched::{recover_sim, run_campaign_sim, CampaignConfig, VirtualCycler};
use cyclekit::sim::CellHistory;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn pass(id: &str, evidence: String) {
    println!("[{}] PASS — {}", id, evidence);
}

const REFERENCE_FEATURE_NAMES: &str = include_str!("data/reference_features.txt");

// ---------------------------------------------------------------------
// A1: composition-dataset reconciliation.
// ---------------------------------------------------------------------

#[test]
fn a1_xps_fixture_reconciliation() {
    let started = Instant::now();
    let samples = fixture_samples();
    assert_eq!(samples.len(), 56);

    // Mean of each source group's member rows equals the published
    // cluster center within 1e-3 per element. Spot value: group 2 Li1s
    // member sum is 195.366 over 6 rows → 32.561.
    let g2_li: f64 = samples
        .iter()
        .filter(|s| s.group == Some(2))
        .map(|s| s.fractions[0])
        .sum();
    assert!((g2_li - 195.366).abs() < 1e-9);
    assert!((g2_li / 6.0 - 32.561).abs() < 1e-12);
    for r in reference_centers() {
        let members: Vec<_> = samples.iter().filter(|s| s.group == Some(r.group)).collect();
        for e in 0..8 {
            let mean: f64 =
                members.iter().map(|s| s.fractions[e]).sum::<f64>() / members.len() as f64;
            assert!(
                (mean - r.center[e]).abs() < 1e-3,
                "group {} {}: {} vs {}",
                r.group,
                ELEMENT_NAMES[e],
                mean,
                r.center[e]
            );
        }
    }

    // Clustering detects and excludes the two singleton outliers, leaving
    // exactly six named patterns.
    let patterns = xps_patterns(&samples, 8, 7, 64, true).unwrap();
    let mut excluded = patterns.excluded.clone();
    excluded.sort();
    assert_eq!(excluded, vec!["25C-11".to_string(), "70C-14".to_string()]);
    assert_eq!(patterns.patterns.len(), 6);
    for (k, p) in patterns.patterns.iter().enumerate() {
        assert_eq!(p.label.as_deref(), Some(PATTERN_ORDER[k]));
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {:?}", elapsed);
    pass(
        "A1",
        format!(
            "8 group means within 1e-3 of centers; singletons {:?} excluded; 6 patterns; {:?}",
            excluded, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A2: feature-space integrity.
// ---------------------------------------------------------------------

#[test]
fn a2_feature_space_integrity() {
    let started = Instant::now();
    let cfg = SpaceConfig::default();
    let space = enumerate_space(&cfg).unwrap();
    // Closed form: 7 signals · 4 segments · 6 inner · 28 selectors ·
    // 6 outer · 2 activators = 56,448 per direction.
    assert_eq!(space.len(), 112_896);
    assert_eq!(cfg.feature_count(), 112_896);
    let discharging = space
        .iter()
        .filter(|e| e.direction == cyclekit::dsl::Direction::Discharge)
        .count();
    assert_eq!(discharging, 56_448);

    for expr in &space {
        let name = expr.render();
        let back = parse(&name).unwrap();
        assert_eq!(&back, expr, "{}", name);
    }

    let mut checked = 0;
    for name in REFERENCE_FEATURE_NAMES.lines().filter(|l| !l.trim().is_empty()) {
        let expr = parse(name).unwrap_or_else(|e| panic!("`{}`: {}", name, e));
        assert_eq!(expr.render(), name, "canonical form differs");
        checked += 1;
    }
    assert_eq!(checked, 60);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {:?}", elapsed);
    pass(
        "A2",
        format!(
            "112,896 features (56,448 per direction); full space and {} reference names round-trip; {:?}",
            checked, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A3: plan-vs-naive oracle equivalence on the full space.
// ---------------------------------------------------------------------

/// Small quick fleet used by A3: five cells, default temperatures.
fn a3_cells() -> Vec<CellHistory> {
    let (_, model) = demo_power_model(1500.0, 7.0, 16.0, 6, 21).unwrap();
    let cfg = FleetConfig {
        n_cells: 5,
        max_cycles: 52,
        dt_s: 3.0,
        detail_cycles: 52,
        record_every: 1,
        base_seed: 33,
        ..Default::default()
    };
    plan_fleet(&cfg)
        .iter()
        .map(|cell| simulate_cell(&cfg, &model, cell).unwrap())
        .collect()
}

#[test]
fn a3_oracle_equivalence_full_space() {
    let started = Instant::now();
    let cfg = SpaceConfig::default();
    let space = enumerate_space(&cfg).unwrap();
    let plan = compile(&space).unwrap();
    let rcfg = ResampleConfig::default();

    let mut max_diff = 0.0_f64;
    for history in a3_cells() {
        if history.cycles.len() < 50 {
            panic!("cell {} too short: {}", history.cell_id, history.cycles.len());
        }
        let fast = eval::evaluate(&plan, &history, 50, &rcfg).unwrap();
        let slow = eval::evaluate_naive(&space, &history, 50, &rcfg).unwrap();
        assert_eq!(fast.len(), slow.len());
        for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
            if a.is_nan() || b.is_nan() {
                assert!(
                    a.is_nan() && b.is_nan(),
                    "{} ({}): {} vs {}",
                    space[k],
                    history.cell_id,
                    a,
                    b
                );
            } else {
                let d = (a - b).abs();
                max_diff = max_diff.max(d);
                assert!(d <= 1e-12, "{} ({}): {} vs {}", space[k], history.cell_id, a, b);
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {:?}", elapsed);
    pass(
        "A3",
        format!(
            "5 cells × 112,896 features: max |plan − naive| = {:.3e}; {:?}",
            max_diff, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A4: NaN-aggregator property suite.
// ---------------------------------------------------------------------

#[test]
fn a4_nan_aggregator_suite() {
    use cyclekit::dsl::AggKind;
    let mut rng = StdRng::seed_from_u64(0xA4);
    let mut cases = 0;
    while cases < 10_000 {
        let len = rng.random_range(1..40usize);
        let base: Vec<f64> = (0..len).map(|_| rng.random_range(-50.0..50.0)).collect();
        // Interleave NaNs at random positions.
        let extra = rng.random_range(0..20usize);
        let mut salted = base.clone();
        for _ in 0..extra {
            let at = rng.random_range(0..=salted.len());
            salted.insert(at, f64::NAN);
        }
        for kind in AggKind::ALL {
            let clean = nanstats::aggregate(kind, &base);
            let dirty = nanstats::aggregate(kind, &salted);
            if clean.is_nan() {
                assert!(dirty.is_nan(), "{:?} on {:?}", kind, base);
            } else {
                assert!(
                    (clean - dirty).abs() <= 1e-12 * (1.0 + clean.abs()),
                    "{:?}: {} vs {} on {:?}",
                    kind,
                    clean,
                    dirty,
                    base
                );
            }
        }
        // Constant slices: zero variance, undefined shape moments.
        let c = rng.random_range(-5.0..5.0);
        let constant = vec![c; rng.random_range(2..10usize)];
        assert_eq!(nanstats::nanvar(&constant), 0.0);
        assert!(nanstats::nanskew(&constant).is_nan());
        assert!(nanstats::nankurtosis(&constant).is_nan());
        cases += 1;
    }
    pass("A4", format!("{} randomized NaN-injection cases", cases));
}

// ---------------------------------------------------------------------
// A5: end-to-end synthetic lifespan study vs the ΔQ-variance baseline.
// ---------------------------------------------------------------------

struct Study {
    features: FeatureMatrix,
    lives: Vec<f64>,
    delta_q: Vec<(Vec<f64>, f64)>,
    knee_constructed: Vec<bool>,
    knee_labeled: Vec<bool>,
}

/// Simulate a fleet one cell at a time, keeping features and labels and
/// dropping raw histories.
fn run_study(fleet: &FleetConfig, space_cfg: &SpaceConfig, want_knee_labels: bool) -> Study {
    let (_, model) = demo_power_model(1800.0, 7.0, fleet.cap_w, 8, 0xD1).unwrap();
    let space = enumerate_space(space_cfg).unwrap();
    let plan = compile(&space).unwrap();
    let rcfg = ResampleConfig::default();
    let life_cfg = LifeLabelConfig::default();
    let knee_cfg = KneeConfig::default();

    let mut features = FeatureMatrix::new(plan.names.clone());
    let mut lives = Vec::new();
    let mut delta_q = Vec::new();
    let mut knee_constructed = Vec::new();
    let mut knee_labeled = Vec::new();

    for cell in plan_fleet(fleet) {
        let history = simulate_cell(fleet, &model, &cell).unwrap();
        let life = match cycle_life(&history, &life_cfg).unwrap() {
            CycleLife::Life(n) if n >= life_cfg.min_cycles => n,
            CycleLife::Life(n) => {
                println!("  excluding {}: life {} below {}", cell.cell_id, n, life_cfg.min_cycles);
                continue;
            }
            CycleLife::Censored => {
                println!("  excluding {}: censored", cell.cell_id);
                continue;
            }
        };
        let row = eval::evaluate(&plan, &history, life_cfg.early_window, &rcfg).unwrap();
        features.push_row(cell.cell_id.clone(), row).unwrap();
        lives.push(life as f64);
        let dq = pipeline::delta_q_feature(&history, 10, 50, &rcfg).unwrap();
        delta_q.push((dq, life as f64));
        if want_knee_labels {
            let (knee, _) = knee_label(&history, &knee_cfg).unwrap();
            knee_constructed.push(cell.knee_constructed);
            knee_labeled.push(knee);
        }
    }
    Study {
        features,
        lives,
        delta_q,
        knee_constructed,
        knee_labeled,
    }
}

#[test]
fn a5_end_to_end_life_study_beats_variance_baseline() {
    let started = Instant::now();
    let fleet = FleetConfig {
        n_cells: 40,
        base_seed: 0xA5,
        ..Default::default()
    };
    let study = run_study(&fleet, &SpaceConfig::default(), false);
    let n = study.features.n_rows();
    println!("  usable cells: {} of {}", n, fleet.n_cells);
    assert!(n >= 30, "too many exclusions: {}", n);

    let task_cfg = TaskConfig {
        n_seeds: 16,
        base_seed: 0x5EED,
        train_fraction: 0.6,
        n_trees: 200,
        max_features: MaxFeatures::Sqrt,
        ..Default::default()
    };
    let data = TaskData {
        x: study.features,
        y: study.lives.clone(),
        n_classes: 0,
    };
    let report = pipeline::run_task(TaskKind::Life, &data, &task_cfg).unwrap();

    // The ΔQ(V) baselines run on identical splits: the variance model is
    // the criterion's comparator; ridge is reported alongside.
    let mut wins = 0;
    for ((_, train_idx, test_idx), outcome) in
        seed_splits(n, &task_cfg).iter().zip(&report.per_seed)
    {
        let train: Vec<(Vec<f64>, f64)> =
            train_idx.iter().map(|&r| study.delta_q[r].clone()).collect();
        let test: Vec<(Vec<f64>, f64)> =
            test_idx.iter().map(|&r| study.delta_q[r].clone()).collect();
        let baseline = variance_model(&train, &test).unwrap();
        let ridge = pipeline::ridge_model(&train, &test, 1.0).unwrap();
        let forest_mape = outcome.test_mape.unwrap();
        if forest_mape < baseline.test_mape {
            wins += 1;
        }
        println!(
            "  seed {:>2}: forest test MAPE {:>6.2} vs variance {:>6.2} / ridge {:>6.2} {}",
            outcome.seed % 100,
            forest_mape,
            baseline.test_mape,
            ridge.test_mape,
            if forest_mape < baseline.test_mape { "✓" } else { "✗" }
        );
    }
    let elapsed = started.elapsed();
    assert!(
        wins >= 14,
        "forest beat the variance baseline in only {} of 16 seeds",
        wins
    );
    assert!(elapsed.as_secs_f64() < 900.0, "took {:?}", elapsed);
    pass(
        "A5",
        format!(
            "forest beat the ΔQ-variance baseline in {}/16 seeds (forest test MAPE {:.1} ± {:.1}); {:?}",
            wins,
            report.test_mape.unwrap().mean,
            report.test_mape.unwrap().sd,
            elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A6: knee task — labeler recovers construction, classifier AUC > 0.9.
// ---------------------------------------------------------------------

#[test]
fn a6_knee_task() {
    let started = Instant::now();
    let fleet = FleetConfig {
        n_cells: 24,
        temperatures_c: vec![30.0],
        knee_fraction: 0.5,
        base_seed: 0xA6,
        max_cycles: 330,
        ..Default::default()
    };
    let study = run_study(&fleet, &SpaceConfig::default(), true);
    let n = study.features.n_rows();
    println!("  usable cells: {} of {}", n, fleet.n_cells);
    assert!(n >= 20, "too many exclusions: {}", n);

    // Labeler vs construction: accuracy 1.0.
    let agree = study
        .knee_constructed
        .iter()
        .zip(&study.knee_labeled)
        .filter(|(a, b)| a == b)
        .count();
    assert_eq!(
        agree, n,
        "labeler disagreed with construction on {} cells: constructed {:?} vs labeled {:?}",
        n - agree,
        study.knee_constructed,
        study.knee_labeled
    );
    let positives = study.knee_labeled.iter().filter(|&&k| k).count();
    assert!(positives >= 8 && positives <= n - 8, "degenerate labels: {}", positives);

    let data = TaskData {
        x: study.features,
        y: study.knee_labeled.iter().map(|&k| k as u8 as f64).collect(),
        n_classes: 2,
    };
    let task_cfg = TaskConfig {
        n_seeds: 16,
        base_seed: 0x6EED,
        n_trees: 200,
        max_features: MaxFeatures::Sqrt,
        ..Default::default()
    };
    let report = pipeline::run_task(TaskKind::Knee, &data, &task_cfg).unwrap();
    let auc = report.pooled_macro_auc.unwrap();
    let elapsed = started.elapsed();
    assert!(auc > 0.9, "pooled one-vs-rest AUC = {}", auc);
    assert!(elapsed.as_secs_f64() < 600.0, "took {:?}", elapsed);
    pass(
        "A6",
        format!(
            "labeler accuracy 1.0 on {} cells ({} knees); classifier AUC {:.3}; {:?}",
            n, positives, auc, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A7: power-model suite.
// ---------------------------------------------------------------------

#[test]
fn a7_hmm_suite() {
    let started = Instant::now();

    // EM log-likelihood is monotone on every fit performed here. The
    // training trace is long enough that its own histogram noise stays
    // well below the total-variation bound being checked.
    let (train, model) = demo_power_model(7200.0, 7.0, 16.0, 8, 0xD1).unwrap();
    let refit = fit_hmm(
        &train,
        &FitOptions {
            n_states: 8,
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap();
    for w in refit.loglik_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()), "loglik fell: {:?}", w);
    }

    // Two-state parameter recovery within ±0.3 W up to permutation.
    let truth = GaussianHmm {
        n_states: 2,
        initial: vec![0.5, 0.5],
        transition: vec![0.95, 0.05, 0.05, 0.95],
        means: vec![2.0, 12.0],
        variances: vec![0.25, 0.25],
    };
    let synth = sample_protocol(&truth, 10_000.0, 1.0, 0x77).unwrap();
    let fit2 = fit_hmm(
        &synth,
        &FitOptions {
            n_states: 2,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let mut means = fit2.model.means.clone();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((means[0] - 2.0).abs() < 0.3, "means {:?}", means);
    assert!((means[1] - 12.0).abs() < 0.3, "means {:?}", means);
    for w in fit2.loglik_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()));
    }

    // Sampled-vs-training power histogram: total-variation distance below
    // 0.05 with 1e5 samples. The forward pass stays finite at this length.
    let sample = sample_protocol(&model, 100_000.0, 1.0, 0x51).unwrap();
    let ll = cyclekit::protocol::loglik(&model, &sample).unwrap();
    assert!(ll.is_finite(), "log-likelihood = {}", ll);
    let clip = |p: f64| p.clamp(0.0, 16.0);
    let bins = 32;
    let hist = |values: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for &v in values {
            let b = ((clip(v) / 16.0 * bins as f64) as usize).min(bins - 1);
            h[b] += 1.0 / values.len() as f64;
        }
        h
    };
    let train_powers = train.powers();
    let sample_powers = sample.powers();
    let (ht, hs) = (hist(&train_powers), hist(&sample_powers));
    let tv = 0.5 * ht.iter().zip(&hs).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.05, "total-variation distance = {}", tv);

    // Post-processing never exceeds the cap.
    let spec = postprocess(&sample, 16.0, 0.25, "a7", 0x51).unwrap();
    assert!(spec.max_power_w() <= 16.0);
    assert!(spec.steps.iter().all(|s| s.power_w >= 0.0));

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {:?}", elapsed);
    pass(
        "A7",
        format!(
            "EM monotone; 2-state means {:?} within ±0.3; histogram TV {:.4}; cap respected; {:?}",
            means, tv, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A8: scheduler exactly-once under crash injection.
// ---------------------------------------------------------------------

#[test]
fn a8_scheduler_exactly_once() {
    use cyclekit::protocol::{ProtocolSpec, ProtocolStep};
    let started = Instant::now();

    let queues: Vec<Vec<ProtocolSpec>> = (0..8)
        .map(|ch| {
            (0..(2 + ch % 3))
                .map(|k| ProtocolSpec {
                    protocol_id: format!("ch{}-s{:02}", ch, k),
                    seed: 0,
                    steps: vec![ProtocolStep {
                        duration_s: 60.0,
                        power_w: 5.0,
                    }],
                })
                .collect()
        })
        .collect();
    let total: usize = queues.iter().map(Vec::len).sum();

    let no_crash_ticks = {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = CampaignConfig::new("a8", dir.path().join("ckpt.json"));
        cfg.cycles_per_spec = 7;
        let mut backend = VirtualCycler::simulated(8);
        run_campaign_sim(&mut backend, &queues, &cfg, None).unwrap().ticks
    };

    // 100 deterministic crash points spread over the campaign.
    let mut trials = 0;
    for trial in 0..100u64 {
        let crash_tick = 1 + (trial * no_crash_ticks.max(2)) / 100;
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = CampaignConfig::new("a8", dir.path().join("ckpt.json"));
        cfg.cycles_per_spec = 7;
        let q = queues.clone();
        let mut backend = VirtualCycler::simulated(8);
        let crashed = run_campaign_sim(&mut backend, &q, &cfg, Some(crash_tick)).unwrap();
        assert!(crashed.crashed);
        let mut backend = VirtualCycler::simulated(8);
        let recovered = recover_sim(&mut backend, &q, &cfg).unwrap();
        assert_eq!(recovered.log.len(), total, "crash at tick {}", crash_tick);
        let mut ids: Vec<&str> = recovered.log.iter().map(|s| s.spec_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), total, "duplicate completion, crash at {}", crash_tick);
        trials += 1;
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {:?}", elapsed);
    pass(
        "A8",
        format!(
            "{} crash trials on 8 channels: every spec completed exactly once; {:?}",
            trials, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// A9: forest suite.
// ---------------------------------------------------------------------

#[test]
fn a9_forest_suite() {
    let mut rng = StdRng::seed_from_u64(0xA9);
    let names: Vec<String> = (0..51).map(|c| format!("f{}", c)).collect();
    let mut x = FeatureMatrix::new(names.clone());
    for r in 0..200 {
        let row: Vec<f64> = (0..51).map(|_| rng.random::<f64>()).collect();
        x.push_row(format!("cell-{}", r), row).unwrap();
    }
    let y: Vec<f64> = (0..200).map(|r| x.get(r, 7)).collect();
    let cfg = ForestConfig {
        n_trees: 60,
        ..ForestConfig::regression(0x99)
    };
    let model = forest::fit(&x, &y, &cfg).unwrap();
    let report = model.importances(&names).unwrap();
    let total: f64 = report.scores.iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "importances sum to {}", total);
    assert_eq!(report.ranked[0].0, "f7");
    assert!(report.ranked[0].1 > 0.5, "top score {}", report.ranked[0].1);

    let again = forest::fit(&x, &y, &cfg).unwrap();
    assert_eq!(model, again);
    assert_eq!(model.predict(&x).unwrap(), again.predict(&x).unwrap());

    pass(
        "A9",
        format!(
            "importances sum 1.0; planted feature ranked first at {:.3}; same-seed refit bit-identical",
            report.ranked[0].1
        ),
    );
}

// ---------------------------------------------------------------------
// A10: metric identities.
// ---------------------------------------------------------------------

#[test]
fn a10_metrics() {
    let y = [120.0, 300.0, 80.0, 45.0];
    assert_eq!(pipeline::mape(&y, &y).unwrap(), 0.0);
    assert_eq!(pipeline::mae(&y, &y).unwrap(), 0.0);
    assert_eq!(pipeline::rmse(&y, &y).unwrap(), 0.0);

    let scores = [0.95, 0.9, 0.8, 0.3, 0.2, 0.1];
    let labels = [true, true, true, false, false, false];
    assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 1.0);

    let mut rng = StdRng::seed_from_u64(0xA10);
    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..n).map(|k| k % 2 == 0).collect();
    let auc = roc_auc(&scores, &labels).unwrap().auc;
    assert!((auc - 0.5).abs() <= 0.02, "random AUC = {}", auc);

    pass(
        "A10",
        format!("perfect-prediction errors 0; separated AUC 1.0; random AUC {:.4}", auc),
    );
}
