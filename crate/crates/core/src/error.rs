use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("stabilized and true-density evaluations cannot be mixed")]
    ModeMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("moment of order {order} needs {terms} terms, above the cap of {cap}")]
    TooManyTerms {
        order: usize,
        terms: u128,
        cap: u128,
    },
    #[error("weights sum to {0}, expected 1")]
    WeightNormalization(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("svd did not converge after {0} sweeps")]
    SvdNoConvergence(usize),
    #[error("backward already ran on this graph; reset gradients first")]
    BackwardTwice,
    #[error("loss must be a scalar, got shape {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("underflow: {0}")]
    Underflow(String),
    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
