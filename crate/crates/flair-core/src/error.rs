//! Crate-wide error type.

use alloc::string::String;

/// Errors reported by model construction, fitting and posterior routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value lies outside the domain of the requested function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The design matrix `X` is rank deficient (XᵀX not invertible).
    #[error("design matrix is rank deficient: {0}")]
    DesignRankDeficient(String),

    /// A matrix that must have full column rank numerically does not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// A numerical operation failed (non-finite values, Cholesky failure).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
