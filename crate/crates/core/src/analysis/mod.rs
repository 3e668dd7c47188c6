//! Evaluation and interpretation of trained classifiers.

pub mod density;
pub mod importance;
pub mod metrics;
pub mod report;
pub mod svg;

pub use density::{kde, silverman_bandwidth, DensityCurve};
pub use importance::{permutation_importance, FeatureImportance, ImportanceReport, SequenceModel};
pub use metrics::{confusion, metrics, ConfusionMatrix, MetricSet};
pub use report::{emit_report, read_metrics_csv, ReportInputs};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("empty input")]
    Empty,
    #[error("{labels} labels but {predictions} predictions")]
    Length { labels: usize, predictions: usize },
    #[error("labels and predictions must be 0 or 1")]
    NonBinary,
    #[error("model evaluation failed: {0}")]
    Model(String),
    #[error("repeats must be at least 1")]
    Repeats,
    #[error("density needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("density grid needs at least 2 points, got {0}")]
    Grid(usize),
    #[error("non-finite value")]
    NonFinite,
    #[error("all values identical: density is a degenerate spike")]
    DegenerateSpike,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
