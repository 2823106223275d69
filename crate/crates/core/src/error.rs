use thiserror::Error;

use crate::linalg::Mat3;

/// Errors produced by the kernel, the solvers and the data I/O helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("matrix is singular or too ill-conditioned to invert")]
    SingularMatrix,

    #[error("quaternion norm is zero")]
    ZeroQuaternion,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("every adjugate column is degenerate")]
    AllColumnsDegenerate,

    #[error("rows are parallel or vanishing; cannot complete the rotation")]
    DegenerateRows,

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: String, found: String },

    #[error("reference cloud is degenerate (|d0| = {d0:e} below threshold {threshold:e})")]
    DegenerateCloud { d0: f64, threshold: f64 },

    #[error("cross-covariance is singular")]
    SingularCovariance,

    #[error("minimizer did not converge after {iterations} iterations (best loss {loss:e})")]
    NoConvergence {
        iterations: usize,
        loss: f64,
        rotation: Mat3,
    },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, PoseError>;

impl From<std::io::Error> for PoseError {
    fn from(e: std::io::Error) -> Self {
        PoseError::Io(e.to_string())
    }
}

impl From<csv::Error> for PoseError {
    fn from(e: csv::Error) -> Self {
        PoseError::Parse(e.to_string())
    }
}
