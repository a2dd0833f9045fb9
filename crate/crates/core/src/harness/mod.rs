//! Benchmark orchestration: dataset sampling, sweeps over generated models
//! and explainers, scoring and report files.

use thiserror::Error;

use crate::alignment::AlignError;
use crate::explainers::interchange::InterchangeError;
use crate::metrics::MetricError;
use crate::model::ModelError;

mod config;
mod dataset;
mod evaluate;
mod report;
mod seeds;
mod sweep;

pub use config::{GenerationRanges, SweepConfig};
pub use dataset::{dataset_size, read_matrix_csv, sample_dataset, write_matrix_csv};
pub use evaluate::{evaluate_explanations, Evaluation};
pub use report::{
    emit_report, read_records_csv, summarize, write_components_csv, write_records_csv, write_summary_csv,
    ExplainerSummary,
};
pub use seeds::derive_seed;
pub use sweep::{
    draw_generation_config, run_benchmark, run_on_models, Attempt, BenchmarkOutput, ComponentRecord,
    EvaluationRecord, ModelEntry, RunManifest, Status,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("data file line {line}: {message}")]
    Data { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Interchange(#[from] InterchangeError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
