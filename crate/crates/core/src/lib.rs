//! Parallel bootstrap resampling.
//!
//! The master generates every resample index up front from one counter-based
//! stream, so serial, threaded and multiprocess runs return identical
//! replicate matrices for the same seed.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod estimates;
pub mod plan;
pub mod rng;
pub mod statistic;
pub mod verify;

pub use dataset::{load_table, parse_table, synth_expression, Dataset, GroupLabels, SynthShape};
pub use engine::{
    run_bootstrap, tree_reduce, BootResult, Engine, EngineLimits, ExecutionMode, Launcher, PhaseTimings,
    ReplicateMatrix, RunRequest,
};
pub use error::{Error, Result};
pub use estimates::{bias, percentile_ci, standard_error, EstimateReport};
pub use plan::{plan_bytes, ResamplePlan, RngConfig, SampleView, Stype};
pub use statistic::{eval_statistic, StatisticSpec, Summary};
