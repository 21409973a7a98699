//! Experiment harness: oracles, scenarios, configuration and report emission.

pub mod config;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenarios;

pub use config::{parse_seeds, ExperimentSpec, Method, MethodFamily, RunSection};
pub use oracle::{exhaustive_oracle, joint_brute_oracle};
pub use report::{percentile, write_atomic, MethodSummary, Report, RunRecord, SeedFailure, TraceRow};
pub use runner::{run_experiment, run_method};
