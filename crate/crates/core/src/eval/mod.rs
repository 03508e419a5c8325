//! Experiment protocol: splits, precision, baselines, synthetic benchmark and reports.

pub mod baselines;
pub mod experiment;
pub mod generator;
pub mod metrics;
pub mod report;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use generator::{generate_benchmark, Benchmark, BenchmarkSpec};
pub use metrics::{precision, split, summarize, Split, Summary};
