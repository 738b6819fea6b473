//! Synthetic panel generation, end-to-end analysis runs and the `creditline`
//! command-line tool.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod models;
pub mod output;
pub mod run;
pub mod synth;
pub mod tables;

pub use config::{PipelineConfig, RunConfig, SyntheticConfig};
pub use error::PipelineError;
pub use run::{run_pipeline, SourceRecord};
pub use synth::{generate_synthetic, SyntheticBundle};
