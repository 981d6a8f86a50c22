//! Command-line driver for the spot-quotient variation pipeline.
//!
//! The `sqv` binary is a thin wrapper around [`cli::run`]. [`report::run_report`]
//! is exposed so the full pipeline can be driven from code with a
//! [`manifest::RunManifest`].

pub mod cli;
pub mod error;
pub mod manifest;
pub mod report;

pub use cli::run;
pub use error::{CliError, Kind};
pub use manifest::RunManifest;
pub use report::{run_report, Bundle};
