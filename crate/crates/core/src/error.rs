use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("sketch parameter/seed mismatch: {0}")]
    Mismatch(String),

    #[error("index {index} out of range for vector length {len}")]
    IndexOutOfRange { index: u64, len: u64 },

    #[error("stream parse error at byte {offset}: {msg}")]
    StreamParse { offset: u64, msg: String },

    #[error("invalid stream update #{position}: {msg}")]
    StreamValidity { position: u64, msg: String },

    #[error("malformed file {path}: {msg}")]
    MalformedFile { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
