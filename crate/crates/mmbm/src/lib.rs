//! Batch front end for `mmbm-core`: model files, CSV/JSON outputs, run
//! manifests and the `mmbm` command line.
//!
//! Exit codes are 0 on success, 2 for invalid input and 3 for numerical
//! failures; every diagnostic is a JSON line on stderr.

pub mod cli;
pub mod commands;
pub mod diag;
pub mod io;
pub mod manifest;

pub use cli::Cli;
pub use commands::execute;
pub use diag::CliError;
pub use io::ModelFile;
pub use manifest::RunManifest;
