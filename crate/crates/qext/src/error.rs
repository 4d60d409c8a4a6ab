//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QextError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("LP solver failed: {0}")]
    SolverFailure(String),

    #[error("unsupported sublevel leaf: {0}")]
    UnsupportedLeaf(String),

    #[error("set is empty: {0}")]
    EmptySet(String),

    #[error("no scale factor < 1 exists: {0}")]
    ScaleFailure(String),

    #[error("point outside function domain")]
    OutsideDomain,

    #[error("family does not bracket the point: {0}")]
    FamilyCoverage(String),

    #[error("gauge undefined: {0}")]
    GaugeUndefined(String),

    #[error("construction premise violated: {0}")]
    PremiseViolation(String),

    #[error("level list too short: {0}")]
    InsufficientLevels(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("not compatible with the projection extension: {0}")]
    ProjectionScope(String),

    #[error("sampling starvation: {0}")]
    SamplingStarvation(String),

    #[error("invalid problem file: {0}")]
    ProblemFile(String),

    #[error("invalid function spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QextError>;
