//! Synthetic cohorts drawn from a known noisy-OR truth graph.

mod sample;
mod spec;

pub use sample::{sample_cohort, sample_records};
pub use spec::{ConfoundedCluster, DemographicModel, RandomSpecConfig, TruthSpec};
