//! Configuration-driven experiment runner for decentralized snapshot
//! gradient tracking: single runs, comparisons, `(α, β)` sweeps and the
//! theory check suite.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{CliError, Result};

/// Identifies the code that produced an output file.
pub fn version_string() -> String {
    format!("flexgt-cli {}", env!("CARGO_PKG_VERSION"))
}
