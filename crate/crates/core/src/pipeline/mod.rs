//! Preprocessing, file formats, experiments and reports.

pub mod demo;
pub mod experiment;
pub mod gradcheck;
pub mod io;
pub mod preprocess;

pub use demo::{filter_demo, filter_demo_file, FilterDemo};
pub use experiment::{
    evaluate_saved, export_dataset, rederive_report, run_experiment, write_outcome, CaseRow, ExperimentConfig,
    ExperimentOutcome, ExperimentReport, ModeSummary, Normalization,
};
pub use gradcheck::{gradient_suite, SuiteEntry};
pub use io::{read_volume, write_volume};
pub use preprocess::{percentile_normalize, resample_isotropic, zscore_normalize, IntensityWindow};
