//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension {
        context: &'static str,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Cholesky factorization hit a non-positive pivot; the matrix is not
    /// positive definite.
    #[error("matrix not positive definite: pivot {index} is {value}")]
    SingularPivot { index: usize, value: f64 },

    /// A symbol value is not on the odd-integer grid for the configured
    /// constellation.
    #[error("entry {index} is off the symbol grid: {value}")]
    OffGrid { index: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at {context}: loss is not finite (rho={rho}, alpha={alpha:?})")]
    NonFiniteLoss {
        context: String,
        rho: f64,
        alpha: Vec<f64>,
    },

    #[error("model file error: {0}")]
    Model(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, detail: impl Into<String>) -> Error {
        Error::Dimension {
            context,
            detail: detail.into(),
        }
    }
}
