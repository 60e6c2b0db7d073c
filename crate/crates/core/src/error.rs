use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("cone block {block} ({cone}) is not supported by the {format} format")]
    UnsupportedCone { block: usize, cone: String, format: &'static str },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("backend solve ended with status {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("recourse not sufficiently expensive: {0}")]
    NotSufficientlyExpensive(String),

    #[error("support unbounded, robust mode unavailable")]
    UnboundedSupport,

    #[error("no feasible candidate across the delta schedule")]
    NoFeasibleCandidate,

    #[error("enumeration guard exceeded: {0}")]
    EnumerationGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn solver(status: SolveStatus, detail: impl Into<String>) -> Self {
        Error::Solver { status, detail: detail.into() }
    }
}
