use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate tweet_id {tweet_id}")]
    DuplicateTweet { line: usize, tweet_id: u64 },

    #[error("line {line}: unknown label {value:?}")]
    UnknownLabel { line: usize, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("malformed {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error("artifact {path} was produced with config hash {found}, expected {expected}")]
    HashMismatch {
        path: String,
        found: String,
        expected: String,
    },
}

impl Error {
    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }
}
