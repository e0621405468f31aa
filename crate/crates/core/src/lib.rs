//! Engine for human-in-the-loop fairness investigation of tabular decision
//! data: ingestion, group and subgroup fairness evidence, causal structure
//! learning, model auditing, and individual similarity comparisons.

pub mod audit;
pub mod causal;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod expr;
pub mod metrics;
pub mod session;
pub mod similarity;
pub mod subgroup;

pub use error::{Error, Result};
