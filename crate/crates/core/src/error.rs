use thiserror::Error;

/// Errors produced by the design, channel and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("instance has {count} input profiles, above the cap of {cap}")]
    CombinatorialBlowup { count: u128, cap: u128 },

    #[error("aggregation function is not declared symmetric")]
    NonSymmetric,

    #[error("closed-form PAM design needs a sum over a uniformly spaced alphabet: {0}")]
    WrongFunction(String),

    #[error("no restart produced a verified-feasible modulation vector")]
    Infeasible,

    #[error("solver produced non-finite iterates")]
    SolverDiverged,

    #[error("channel coefficient of node {node} is too small to invert")]
    ZeroChannel { node: usize },

    #[error(
        "points {first} and {second} coincide but carry values {value_first} and {value_second}"
    )]
    OverlapViolation {
        first: usize,
        second: usize,
        value_first: f64,
        value_second: f64,
    },

    #[error("codebook is empty")]
    EmptyCodebook,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
