use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank-deficient covariance (pivot {pivot} of {dim} is not positive) and no jitter configured")]
    RankDeficient { pivot: usize, dim: usize },

    #[error("boundary input: hidden unit {unit} of layer {layer} has pre-activation {value:e}")]
    BoundaryInput { layer: usize, unit: usize, value: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("gradient root must be a scalar, got a {rows}x{cols} node")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroNormRow { row: usize },

    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted { step: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(term: impl Into<String>) -> Self {
        Error::NonFinite { term: term.into() }
    }

    /// True for failures caused by numerics rather than by bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NonFinite { .. }
                | Error::TrainingAborted { .. }
                | Error::BoundaryInput { .. }
                | Error::ZeroNormRow { .. }
        )
    }
}

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
