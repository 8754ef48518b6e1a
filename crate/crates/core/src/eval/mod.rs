//! Accuracy metrics, the Monte-Carlo protocol and the band-selection
//! pipeline built on it.

mod config;
mod metrics;
mod monte_carlo;
mod pipeline;

pub use config::{Architecture, DataSource, ExperimentConfig};
pub use metrics::{average_accuracy, confusion, kappa, ConfusionMatrix, MetricsReport};
pub use monte_carlo::{
    aggregate, monte_carlo, prepare_run, records_from_csv, records_to_csv, train_and_evaluate,
    Aggregate, MonteCarloReport, PreparedRun, RunFailure, RunRecord, TrainedRun,
};
pub use pipeline::{band_selection_pipeline, PipelineReport, ReducedEvaluation};
