use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry in input vector")]
    NonFiniteInput,

    #[error("operator does not expose an adjoint")]
    AdjointUnavailable,

    #[error("sampler is not isotropic, no constant c is defined")]
    NotIsotropic,

    #[error("stepsize policy cannot be resolved: {0}")]
    StepsizeUnresolvable(String),

    #[error("operator is not square ({m}x{d}), embed it first")]
    NotSquare { m: usize, d: usize },

    #[error("matrix too large for dense SVD: max dimension {0} exceeds 2000")]
    TooLarge(usize),

    #[error("all sampled directions were in the kernel of the operator")]
    AllDirectionsNull,

    #[error("column {0} has zero norm, M is undefined for coordinate sampling")]
    ZeroColumn(usize),

    #[error("degenerate spectrum: lambda_min must be positive")]
    DegenerateSpectrum,

    #[error("dimension {0} too small, bounds require d > 2")]
    DimensionTooSmall(usize),

    #[error("gamma function requires a positive argument, got {0}")]
    NonPositiveArgument(f64),

    #[error("contraction factor lambda = {0} >= 1, offset bound is not meaningful")]
    RateDegenerate(f64),

    #[error("parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },

    #[error("unsupported MatrixMarket format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
