use thiserror::Error;

use crate::builder::BuilderResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Algorithm 1 did not reach its gap threshold. Carries the iterate with
    /// the smallest gap seen.
    #[error("bundle builder exceeded {iterations} iterations (best gap {:.3e})", best.gap)]
    BuilderLimit {
        iterations: usize,
        best: Box<BuilderResult>,
    },

    #[error("inner loop at level j = {j} exceeded {max_inner} steps")]
    InnerLimit { j: usize, max_inner: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
