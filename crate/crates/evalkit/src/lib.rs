//! Pose accuracy metrics and reports.
//!
//! Distances are ADD values in meters. A missed instance is recorded with
//! an infinite distance, so it fails every threshold.

pub mod metrics;
pub mod report;

pub use metrics::{add_distance, auc, evaluate_detections, pass_rate, threshold_curve, EvalRecord};
pub use report::{
    format_table, make_report, read_curves, render_svg, report_from_curves, write_curves, write_report, Curves, EvalReport,
    ReportRow, ReportSettings,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no distances to evaluate")]
    Empty,
    #[error("model has no vertices")]
    EmptyModel,
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
    #[error("no model for class {0}")]
    MissingModel(String),
    #[error("threshold {threshold} is not on the curve grid for {object}")]
    OffGrid { object: String, threshold: f64 },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl EvalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
