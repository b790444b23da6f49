//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("signal buffer not ready for analysis")]
    NotReady,

    #[error("no usable signal: {0}")]
    NoSignal(String),

    #[error("band [{low}, {high}] Hz not realizable at fs {fs} Hz")]
    InvalidBand { low: f64, high: f64, fs: f64 },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("failed to bind {addr}:{port}: {source}")]
    Bind {
        addr: String,
        port: u16,
        source: std::io::Error,
    },

    #[error("estimate and reference series do not overlap in time")]
    EmptyAlignment,

    #[error("{0}")]
    Runtime(String),
}
