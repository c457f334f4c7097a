//! Std companion to `recoin-core`: dump ingestion, snapshot files, the
//! session log, statistical analysis, the HTTP service and the CLI.

pub mod analytics;
pub mod cli;
pub mod dump;
pub mod error;
pub mod service;
pub mod session_log;
pub mod snapshot_file;

pub use error::{Error, Result};
pub use recoin_core;
