use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point set")]
    DegeneratePoints,

    #[error("location outside mesh: ({x}, {y})")]
    OutsideMesh { x: f64, y: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reduced precision not positive definite")]
    NotPositiveDefinite,

    #[error("cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("observation inconsistent with family: {0}")]
    InconsistentObservation(String),

    #[error("prevalence subset empty")]
    EmptyPrevalence,

    #[error("glm did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    GlmNonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("invalid initialization: {0}")]
    InvalidInitialization(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code for this error: 1 for numerical failures, 2 for
    /// I/O and configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => 2,
            _ => 1,
        }
    }
}
