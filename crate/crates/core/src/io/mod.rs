//! File formats, experiment configs, reports and figures.

pub mod config;
pub mod matrix;
pub mod plot;
pub mod report;

pub use config::{load_dataset, load_features, load_model, prepare_data, run_config, DataSpec, ExperimentConfig, LoadedData};
pub use matrix::{load_labels, load_matrix, save_labels, save_matrix};
pub use plot::{render_experiment_plots, render_report_plots};
pub use report::{emit_experiment, emit_report, read_json, write_json, ReportFormat};
