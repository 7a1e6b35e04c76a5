//! Batch orchestration for attractor-lab: TOML manifests in, stored runs and
//! JSON/CSV reports out.

pub mod cli;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, CliResult};
pub use manifest::ExperimentManifest;
pub use pipeline::{Experiment, Stage};
