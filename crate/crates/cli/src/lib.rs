//! Configuration, pipeline orchestration and reporting for the `vkhom`
//! command-line tool.

pub mod config;
pub mod pipeline;

pub use config::{parse_config, read_config, ConfigErrors, RunConfig};
pub use pipeline::{run_pipeline, Manifest, PipelineError, PipelineReport};
