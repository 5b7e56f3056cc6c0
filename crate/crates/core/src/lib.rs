//! Decentralized snapshot gradient tracking with tunable communication and
//! computation steps per round.

pub mod algorithm;
pub mod complexity;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod problems;
mod serde_rows;

pub use error::{Error, Result};
