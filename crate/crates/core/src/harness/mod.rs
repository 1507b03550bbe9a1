//! Experiment configuration, the solve/train/evaluate pipeline and report files.

mod config;
mod experiment;
mod report;

pub use config::{
    ConstantConfig, DynamicConfig, ExperimentConfig, GreedySweepConfig, MethodConfig, ModelConfig,
    ProblemConfig,
};
pub use experiment::{run_experiment, ExperimentSetup, StageSeeds};
pub use report::{emit_reports, ComparisonReport, MethodReport};
