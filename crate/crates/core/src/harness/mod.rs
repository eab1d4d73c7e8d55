//! Experiment orchestration: configuration files, seeded training runs with
//! periodic greedy evaluation, CSV output, checkpoints and summaries.
//!
//! One environment step advances every agent once, so step counts are joint
//! steps.

mod checkpoint;
mod config;
mod run;
mod summary;

pub use checkpoint::{Checkpoint, Tensor, MANIFEST_FILE, PARAMS_FILE};
pub use config::{load_config, AlgoConfig, AlgoKind, EnvConfig, EnvKind, ExperimentConfig, RunConfig, CONFIG_KEYS};
pub use run::{
    csv_path, evaluate, evaluate_checkpoint, make_env, make_learners, run_experiment, run_seed, run_stem,
    worker_count, EvalOutcome, EvalPoint, RunRecord, CSV_HEADER, DIAG_HEADER, WORKERS_ENV,
};
pub use summary::{
    final_window_mean, mean_and_half_width, read_run_dir, summarize, summarize_dir, SummaryRow, SummaryTable,
    FINAL_WINDOW,
};
