//! Experiment harness: configuration, orchestration and solution archives.

pub mod archive;
pub mod config;
pub mod runner;

pub use archive::{ArchiveDescriptor, ArchiveError, SolutionArchive};
pub use config::{ConfigError, ExperimentConfig};
pub use runner::{thread_pool, OutputWriter, RunError, Runner};
