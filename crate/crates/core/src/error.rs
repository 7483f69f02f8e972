use thiserror::Error;

/// Errors produced by the modelling, sampling and I/O routines.
#[derive(Debug, Error)]
pub enum LspmError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite state at iteration {iteration}: {detail}")]
    NonFinite { iteration: u64, detail: String },

    #[error("chain {chain} failed: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<LspmError>,
    },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LspmError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LspmError::InvalidArgument(msg.into()))
}
