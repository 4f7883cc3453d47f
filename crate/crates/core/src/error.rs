use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Solver outcomes (infeasible, unbounded, stalled) are not errors at the
/// `sdp` layer; they travel inside [`crate::sdp::SolveReport`]. Higher layers
/// convert a non-answer status into [`Error::Solver`] where a yes/no answer
/// is expected.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("moment vector of order {have} cannot supply degree {need}")]
    OrderTooSmall { need: u32, have: u32 },

    #[error("atom extraction failed: {0}")]
    Extraction(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("grid does not meet the index set")]
    EmptyGrid,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("problem file: {0}")]
    ProblemFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
