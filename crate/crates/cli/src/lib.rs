//! Command-line front end for `lamp-core`.
//!
//! Every subcommand writes into `--out-dir` and finishes with a
//! `manifest.json` holding the resolved arguments, so `lamp replay
//! --manifest <file>` reproduces the run's outputs byte for byte. Files are
//! written atomically (temp file and rename).
//!
//! Exit codes: 0 success, 2 usage or validation, 3 I/O or malformed
//! files, 4 numerical failure.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod ppm;

pub use args::{Cli, Command};
pub use commands::run;
pub use error::{CliError, CliResult};
