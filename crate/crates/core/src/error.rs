use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SneError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape { op: &'static str, left: String, right: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("loss function is not deterministic: {first} then {second}")]
    Determinism { first: f64, second: f64 },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, SneError>;

impl SneError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        SneError::Shape { op, left: format!("{}x{}", left.0, left.1), right: format!("{}x{}", right.0, right.1) }
    }
}
