//! File formats and orchestration for the outfit retrieval engine.
//!
//! The algorithmic core lives in `attire-core`; this crate adds everything
//! that touches the filesystem — dataset manifests, the binary feature
//! file, model checkpoints, the persisted index, run configuration, and the
//! line-delimited metrics log — plus the `attire` CLI binary.

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod features;
pub mod index_io;
pub mod manifest;
pub mod metrics;
pub mod runconfig;

pub use error::{CliError, CliResult};
