//! Experiment loop, configuration, logging, replay and analysis.

mod analysis;
mod config;
mod engine;
mod log;
mod replay;

pub use analysis::{
    analyze, coverage, duplication_rate, AgentActivity, AnalysisReport, FrontierPoint, RoundSignificance,
    COVERAGE_CELLS, DUPLICATE_RADIUS, FRONTIER_SIZE,
};
pub use config::{BackendConfig, ExperimentConfig, LandscapeConfig, Mode};
pub use engine::{build_backend, run_ablation_independent, run_experiment, run_with, RunOutcome};
pub use log::{Phase, Record, RunLog, DIGEST_SCHEMA};
pub use replay::{replay, verify};
