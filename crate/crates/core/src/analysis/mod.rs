//! Post-hoc analysis of finished runs: hyperparameter importance,
//! cross-evaluation of incumbents and report files.

mod crosseval;
mod export;
mod fanova;
pub mod forest;

use thiserror::Error;

use crate::configspace::SpaceError;
use crate::harness::HarnessError;

pub use crosseval::{cross_eval, CrossEvalMatrix};
pub use export::{
    export_reports, history_csv, read_history_csv, trajectory_csv, write_history_csv, ParetoPoint,
    ParetoReport,
};
pub use fanova::{
    fanova_first_order, fanova_first_order_data, forest_importance, ImportanceEntry, ImportanceReport,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two distinct configurations")]
    InsufficientData,
    #[error("search spaces do not match: {0}")]
    SpaceMismatch(String),
    #[error("malformed history row {line}: {reason}")]
    MalformedHistory { line: usize, reason: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}
