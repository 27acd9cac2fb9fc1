//! Experiment harness for Curious Explorer: JSON configuration, the
//! `env`/`explore`/`learn`/`verify` pipelines and their CSV/JSON artifacts.

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::{EnvConfig, ExperimentConfig, Metric, OptimizerChoice, ResetChoice, ScheduleMode};
pub use pipeline::{run_env, run_explore, run_learn, run_verify, ExploreSummary, LearnSummary, VerifySummary};
