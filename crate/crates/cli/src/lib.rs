//! Pipeline behind the `pemo` executable: run configuration, manifests and
//! the subcommands, callable in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::RunManifest;
