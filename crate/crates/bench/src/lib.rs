//! Experiment harness for projection-free Online Newton Step: seeded loss
//! streams, baselines, invariant checks and report output.

pub mod baselines;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod stream;
pub mod sweep;

pub use config::RunConfig;
pub use error::BenchError;
pub use experiment::{prepare, run_experiment, run_prepared, write_outputs, Outcome, Prepared};
