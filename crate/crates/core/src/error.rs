use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("sample out of range: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("incomplete track: {0}")]
    IncompleteTrack(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than a caller mistake.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Argument(_) | Error::Usage(_) | Error::Plan(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
