//! Pipeline orchestration for ratekit: config parsing, stage execution,
//! synthetic data generators and the run manifest. The `ratekit` binary is a
//! thin wrapper over this library.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod stages;
pub mod synth;
pub mod tabular;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use pipeline::{run_pipeline, RunManifest};
