//! Learning bipartite disease→symptom knowledge graphs from binary clinical
//! co-occurrence records, and evaluating them against a reference graph.

pub mod analysis;
pub mod cohort;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod graphlearn;
pub mod kgraph;
pub mod pipeline;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
