use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bag `{id}` has {n} samples but at least {min} are required")]
    BagTooSmall { id: String, n: usize, min: usize },

    #[error("non-finite value in bag `{0}`")]
    NonFinite(String),

    #[error("duplicate bag id `{0}`")]
    DuplicateBagId(String),

    #[error("unknown bag id `{0}`")]
    UnknownBagId(String),

    #[error("kernel width must be positive and finite, got {0}")]
    InvalidWidth(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate shrinkage for bag `{0}`")]
    DegenerateShrinkage(String),

    #[error("linear system is singular or produced non-finite weights")]
    SingularSystem,

    #[error("feature {0} has zero variance")]
    ZeroVariance(usize),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
