use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkyrError {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("eigensolver did not converge after {iterations} iterations (best residuals {residuals:?})")]
    NotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("dimension {dim} exceeds the dense limit {max}")]
    TooLarge { dim: usize, max: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no isolated qubit at this parameter point: gap {gap:e} below degeneracy tolerance {tol:e}")]
    NoIsolatedQubit { gap: f64, tol: f64 },

    #[error("norm drift {drift:e} at t = {time}; reduce dt")]
    IntegratorFailure { drift: f64, time: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SkyrError>;

pub(crate) fn contract<S: Into<String>>(msg: S) -> SkyrError {
    SkyrError::Contract(msg.into())
}
