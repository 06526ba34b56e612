//! Experiment runner for `tptkit`: configuration, pipeline stages, artifacts
//! and the comparison report.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, Format};
pub use pipeline::{Pipeline, PipelineError};
pub use report::Report;

/// All identity rows passed.
pub const EXIT_PASS: i32 = 0;
/// The run finished but at least one row or identity failed.
pub const EXIT_IDENTITY: i32 = 1;
/// The configuration could not be read or is inconsistent.
pub const EXIT_CONFIG: i32 = 2;
/// A numerical stage failed.
pub const EXIT_NUMERICAL: i32 = 3;
