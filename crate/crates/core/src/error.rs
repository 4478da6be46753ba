use thiserror::Error;

/// Errors raised by the algebra, sampling and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scalar part is {found}, expected {expected}")]
    ScalarPart { expected: f64, found: f64 },

    #[error("input is not a Lie element (reconstruction residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NotLie { residual: f64, tolerance: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("solver did not converge: {message} (best residual {best_residual:.3e})")]
    NoConvergence { message: String, best_residual: f64 },

    #[error("degenerate endpoint map: smallest scaled singular value {sigma_min:.3e}")]
    RankDeficient { sigma_min: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad caller input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::InvalidArgument(_)
                | Error::InvalidPath(_)
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
