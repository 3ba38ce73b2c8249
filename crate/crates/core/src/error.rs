use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite instance")]
    NonFinite,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("backbone not shape-preserving: {0}")]
    NotShapePreserving(String),

    #[error("kernel not affine-constrained (sum = {0})")]
    KernelNotAffine(f64),

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
