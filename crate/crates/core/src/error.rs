use std::path::PathBuf;

use crate::train::ModelCheckpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(
        "numerical degeneracy in warped section: |1 + a^2 c + a d| < 1e-12 (c={c}, d={d}, a={a})"
    )]
    Degenerate { c: f64, d: f64, a: f64 },

    #[error("section {index}: {source}")]
    Section {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("division by near-zero denominator {0:e}")]
    DivisionByZero(f64),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; last good checkpoint from epoch {}", last_good.epoch)]
    Diverged {
        epoch: usize,
        batch: usize,
        last_good: Box<ModelCheckpoint>,
    },

    #[error("wav error in {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn in_section(self, index: usize) -> Self {
        Error::Section {
            index,
            source: Box::new(self),
        }
    }
}
