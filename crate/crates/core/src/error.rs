use thiserror::Error;

use crate::sampler::AttemptStats;
use crate::weights::Status;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight sequence: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("not tunable: {0}")]
    NotTunable(String),

    #[error("operation requires an admissible weight sequence")]
    NotAdmissible,

    #[error("operation requires a regular critical weight sequence, got {0:?}")]
    NotRegularCritical(Status),

    #[error("consistency failure: {0}")]
    ConsistencyFailure(String),

    #[error("sampling budget exhausted: {0:?}")]
    BudgetExhausted(AttemptStats),

    #[error("infeasible conditioning target: {0}")]
    InfeasibleTarget(String),

    #[error("enumeration bound exceeded: {0}")]
    EnumerationBound(String),

    #[error("invalid mobile: {0}")]
    InvalidMobile(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
