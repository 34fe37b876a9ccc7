//! Experiment orchestration: config loading, seeded multi-run training,
//! evaluation, metrics CSVs, checkpoints, and learning-curve emission.

mod config;
pub mod metrics;
pub mod plot;
mod runner;

pub use config::{
    config_hash, load_config, resolve, Algorithm, ExperimentConfig, ResolvedExperiment,
    CONFIG_SCHEMA_VERSION,
};
pub use runner::{
    checkpoint_file_name, evaluate_checkpoint, evaluate_policy, load_policy, rollout_deterministic,
    run_experiment, run_single_seed, EvalSummary, RunRecord,
};
