//! Library side of the `predcoh` binary: configuration, dataset glue, and
//! the cached stage pipeline. Kept as a library so integration tests can
//! drive full runs in-process.

pub mod config;
pub mod dataset;
pub mod pipeline;

pub use config::PipelineConfig;
pub use pipeline::{report_comparable, Pipeline, PipelineError, RunReport, Stage};
