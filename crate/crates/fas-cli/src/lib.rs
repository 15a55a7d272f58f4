//! File formats and command implementations behind the `fas` binary:
//! the `.fasf` feature container, the JSON dataset manifest, the "FASC"
//! checkpoint, the run-configuration file, and the subcommands themselves.

pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod feature_file;
pub mod manifest;
pub mod runconfig;

pub use error::{CliError, Result};
