use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum RfsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("iteration diverged at step {iteration}: |theta| = {norm:e} exceeds {limit:e}")]
    Divergence { iteration: usize, norm: f64, limit: f64 },

    #[error("eigendecomposition failed: {0}")]
    Decomposition(String),

    #[error("matrix is not positive semidefinite: eigenvalue {value:e} below -1e-6 * trace ({trace:e})")]
    NotPositiveSemidefinite { value: f64, trace: f64 },

    #[error("sample size n = {n} is below the admissible threshold n0 = {n0:.3}")]
    SampleSizeTooSmall { n: usize, n0: f64 },

    #[error("estimator was fitted with a different feature map")]
    FeatureMapMismatch,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RfsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RfsError::InvalidParameter(msg.into()))
}
