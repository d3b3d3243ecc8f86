use thiserror::Error;

/// Errors raised while validating or combining finite distributions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoError {
    #[error("probability at index {index} is invalid: {value}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1 (tolerance {tolerance:e})")]
    MassMismatch { sum: f64, tolerance: f64 },

    #[error("distribution is empty")]
    Empty,

    /// `p_i > 0` where `q_i = 0`: the divergence is infinite.
    #[error("absolute continuity violated at index {index}: p = {p}, q = 0")]
    AbsoluteContinuity { index: usize, p: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("axis {axis} out of range for a {ndim}-axis joint")]
    AxisOutOfRange { axis: usize, ndim: usize },

    #[error("query prior weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = InfoError> = std::result::Result<T, E>;
