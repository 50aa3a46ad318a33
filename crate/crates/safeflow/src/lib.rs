//! Scenario files, trajectory export, parallel sweeps and the command line
//! front end for `safeflow-core`.

pub mod cli;
pub mod error;
pub mod export;
pub mod scenario;
pub mod sweep;

pub use error::{Result, SafeflowError};
pub use safeflow_core as core;
