//! Command-line pipeline for eyes-closed safety kernels: config parsing,
//! artifact storage, exports and the `reach`, `pipeline`, `verify` and
//! `export` commands.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod export;

pub use artifact::{Artifact, ArtifactMeta};
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
