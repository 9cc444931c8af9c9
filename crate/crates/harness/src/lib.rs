//! Experiment harness for `fedtrade`: TOML scenarios, seeded and parallel
//! replications, CSV/JSON outputs with a manifest, and the settlement audit.

pub mod audit;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod sampling;
pub mod seeds;

pub use error::{HarnessError, Result};
