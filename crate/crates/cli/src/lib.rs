//! Batch front end for the subsidy toolkit: TOML run configs, panel CSV
//! I/O, estimation and diagnostic reports, and named replication runs.
//! Every run writes a `manifest.json` with SHA-256 digests of its outputs.

pub mod commands;
pub mod config;
pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod manifest;
pub mod panel_csv;
pub mod scenarios;

pub use error::{CliError, Result, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
