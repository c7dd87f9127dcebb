//! Experiment runner behind the `odp` command: config files, corpora,
//! training and evaluation runs, comparison tables and figures.

pub mod config;
pub mod data;
pub mod plot;
pub mod runners;

pub use config::{parse_config, Experiment, ExperimentConfig, Overrides, Scale};
pub use data::ExperimentData;
pub use runners::{
    cmd_ablate, cmd_compare_algs, cmd_eval, cmd_train, run_full_matrix, ComparisonRow, ModelOutcome, TrainedModel,
};
