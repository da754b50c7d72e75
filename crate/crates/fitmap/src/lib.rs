pub mod error;
pub mod format;
pub mod pipeline;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, BatchSource, NetworkSource, PipelineConfig, PipelineRun};
