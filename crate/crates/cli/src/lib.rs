//! Command-line front end: mock data, subcommands and the experiment
//! pipeline.

pub mod commands;
pub mod config;
pub mod mock;
pub mod pipeline;

pub use commands::GateFailure;
pub use config::{ExperimentConfig, GeneratorKind};
pub use pipeline::{run_pipeline, Manifest, PipelineOutcome};
