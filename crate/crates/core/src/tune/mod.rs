//! Splitting, hyperparameter search and multi-seed experiments.

pub mod experiment;
pub mod grid;
pub mod pipeline;
pub mod split;

pub use pipeline::{
    check_disjoint, detector_probs, evaluate_detector, fit_detector, metrics_from_scores, score_dataset, Artifact,
    DetectorFile, DetectorOptions, FittedDetector, Population,
};
pub use split::{make_split, make_splits, Split, SplitSpec, DEFAULT_SEEDS};
pub use experiment::{
    mean_std, run_ablation, run_experiment, run_matched_experiment, run_mismatch_experiment, AblationAxis, AblationSpec,
    AggregateRow, ExperimentKind, ExperimentResult, Protocol, RunRecord, RunStatus,
};
pub use grid::{grid_search, selection_value, tie_break, CellResult, GridResult, GridSpec, SELECTION_TPR};
