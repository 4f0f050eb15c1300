//! Battery degradation modeling under randomized cyclic protocols.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`protocol`]: convert driving speed traces into battery power traces,
//!   fit a Gaussian-emission hidden Markov model to them, and sample
//!   randomized discharge protocols (capped and idle-compacted).
//! - [`sim`]: a synthetic lithium-ion cell with controllable degradation
//!   (fade rate, knee, temperature sensitivity) that turns protocols into
//!   per-cycle electrochemical records.
//! - [`dsl`]: the feature-expression grammar
//!   (`identity(nanmax(Cycle(6/7))[nanvar(VQ_d(1/4))])`), its parser,
//!   canonical renderer, space enumeration, and compilation into a
//!   deduplicated evaluation plan.
//! - [`eval`]: resampling of irregular electrochemical curves onto fixed
//!   grids and execution of evaluation plans over early cycles.
//! - [`forest`]: a from-scratch random forest (regression and
//!   classification) with deterministic seeding and information-gain
//!   feature importances.
//! - [`cluster`]: K-means (Lloyd) with k-means++ seeding, inertia curves,
//!   and an elbow helper.
//! - [`pipeline`]: labeling rules (lifespan, knee, XPS pattern), baseline
//!   models, multi-seed train/eval orchestration, and metrics.
//! - [`sched`]: a batch-testing campaign orchestrator with per-channel
//!   monitors, atomic checkpoints, and crash recovery.
//! - [`fleet`]: synthetic fleet generation gluing protocols and the cell
//!   simulator together for end-to-end studies.

pub mod cluster;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod fleet;
pub mod forest;
pub mod pipeline;
pub mod protocol;
pub mod sched;
pub mod sim;

pub(crate) mod util;

pub use error::{Error, Result};
