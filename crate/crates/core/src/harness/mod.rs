//! Evaluation backends. A [`Problem`] turns a configuration and a budget
//! into a cost vector; the optimizer never looks behind this trait.

mod dsc;
mod external;
mod replay;
mod synthetic;

use std::time::Duration;

use thiserror::Error;

use crate::configspace::{Configuration, SpaceError};
use crate::moo::CostVector;

pub use dsc::{dsc, VoxelMask};
pub use external::{EvalRequestWire, EvalResponseWire, ExternalProblem};
pub use replay::{write_replay_table, ReplayProblem, ReplayRow};
pub use synthetic::{Condition, SyntheticProblem, SyntheticSpec};

/// Objective values returned by an evaluation; both are minimized.
pub type Objectives = CostVector;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("budget {budget} outside [1, {b_max}]")]
    BudgetOutOfRange { budget: u64, b_max: u64 },
    #[error("no replay entry for budget {budget} of {key}")]
    MissingEntry { key: String, budget: u64 },
    #[error("malformed replay row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("voxel grids differ in shape: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid synthetic problem: {0}")]
    InvalidSynthetic(String),
    #[error("evaluator timed out after {0:?}")]
    Timeout(Duration),
    #[error("evaluator protocol error: {0}")]
    ProtocolError(String),
    #[error("evaluator reported failure for request {0}")]
    EvaluatorReportedFailure(String),
    #[error("cannot start evaluator `{command}`: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    /// True for failures of an evaluator process rather than of the inputs.
    pub fn is_evaluator_failure(&self) -> bool {
        matches!(
            self,
            HarnessError::Timeout(_)
                | HarnessError::ProtocolError(_)
                | HarnessError::EvaluatorReportedFailure(_)
                | HarnessError::Spawn { .. }
        )
    }
}

/// Everything an evaluator is told about one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub config_id: u64,
    pub config: &'a Configuration,
    pub budget: u64,
    /// Budget the configuration was last trained to, when continuing.
    pub previous_budget: Option<u64>,
    pub seed: u64,
}

pub trait Problem: Sync {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError>;
}

impl<P: Problem + ?Sized> Problem for &P {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError> {
        (**self).evaluate(request)
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError> {
        (**self).evaluate(request)
    }
}
