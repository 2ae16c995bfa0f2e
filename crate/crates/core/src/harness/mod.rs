//! Dataset files, cross-validated evaluation and reports.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod pipeline;
pub mod report;

pub use config::{dataset_root, HarnessConfig, DATASET_ENV};
pub use dataset::{
    list_samples, list_sessions, read_sample, read_session, sample_dir, session_dir, write_sample, write_session,
    SessionMeta,
};
pub use eval::{
    ablation_run, ablation_variants, best_selector, evaluate_cells, grid, louo_cv, mean_sd, reduced_gesture_eval,
    reduced_tasks, valid_selectors, AblationRow, CellResult, Confusion, EvalConfig, FoldResult, REDUCED_SET,
};
pub use pipeline::{dataset_features, preprocess_dataset, samples_features, simulate_dataset, simulate_features};
pub use report::{render_confusion, task_name, AblationTable, EvalPlan, EvalReport};
