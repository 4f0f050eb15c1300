//! Feature evaluation: resampling of raw records onto fixed grids,
//! NaN-ignoring aggregators, and execution of compiled plans over the
//! first N cycles of each cell.

mod evaluate;
mod matrix;
pub mod nanstats;
mod resample;

pub use evaluate::{evaluate, evaluate_matrix, evaluate_naive, resample_history};
pub use matrix::FeatureMatrix;
pub use resample::{
    group_cycles, resample_cycle, segment_agg, segment_bounds, ResampleConfig, ResampledCycle,
    ResampledPhase,
};
