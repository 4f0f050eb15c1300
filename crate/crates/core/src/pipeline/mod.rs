//! Task layer: labeling rules (lifespan, knee, interfacial-chemistry
//! pattern), baseline models, multi-seed train/eval orchestration, and
//! metrics.

pub mod baseline;
pub mod labels;
pub mod metrics;
pub mod task;
pub mod xps;

pub use baseline::{ridge_model, variance_model, BaselineReport};
pub use labels::{
    cycle_life, delta_q_feature, filter_usable, knee_label, nominal_capacity, CycleLife,
    KneeConfig, KneeMode, LifeLabelConfig,
};
pub use metrics::{cumulated_mae_curve, mae, mape, one_vs_rest_roc, rmse, roc_auc, RocCurve};
pub use task::{
    run_task, seed_splits, split_indices, EvalReport, MeanSd, SeedOutcome, TaskConfig, TaskData,
    TaskKind,
};
pub use xps::{
    fixture_samples, parse_xps_csv, reference_centers, xps_patterns, Pattern, ReferenceCenter,
    XpsPatterns, XpsSample, ELEMENT_NAMES, PATTERN_ORDER,
};
