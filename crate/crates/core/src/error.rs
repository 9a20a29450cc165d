use thiserror::Error;

/// Error type shared by the whole crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid torus spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("spec mismatch between operands: {0}")]
    SpecMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resolution too small for this realization: {0}")]
    ResolutionTooSmall(String),
    #[error("fixed-point iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("numerical overflow: {0}")]
    Overflow(String),
    #[error("matrix too large: {0}")]
    MatrixTooLarge(String),
    #[error("linear algebra backend error: {0}")]
    Linalg(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
