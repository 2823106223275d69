//! Benchmark harness for the pose estimators in `dram-pose`: simulated
//! trial batches, aggregate tables, noise sweeps, sorted loss traces,
//! timing and single solves on CSV input.

pub mod config;
pub mod error;
pub mod record;
pub mod solve;
pub mod sorted;
pub mod svg;
pub mod sweep;
pub mod table;
pub mod timing;
pub mod trial;

pub use config::{Correction, SweepConfig};
pub use error::{BenchError, Result};
pub use record::TrialRecord;
pub use trial::{evaluate_trial, replay, run_trials, TrialSpec};
