//! Experiment harness: configuration, seeded runs, batches and comparisons.

pub mod batch;
pub mod config;
pub mod record;
pub mod run;

pub use batch::{compare_optimizers, run_batch, BatchSummary, ComparisonReport};
pub use config::{OptimizerKind, ProblemConfig, RunConfig, ThresholdScale};
pub use record::RunRecord;
pub use run::{run_single, run_single_to};
