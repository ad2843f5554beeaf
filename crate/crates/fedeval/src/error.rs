//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset handling, histogram construction, and the
/// federated protocol.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("score {score} outside declared range [{lo}, {hi}] (row {row})")]
    ScoreOutOfRange {
        score: f64,
        lo: f64,
        hi: f64,
        row: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("histogram config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("leaf index {index} out of bounds (max {max})")]
    IndexOutOfBounds { index: usize, max: usize },

    #[error("curve construction requires at least one positive and one negative example")]
    SingleClass,

    #[error("interpolation error: {0}")]
    Interpolation(String),

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
