use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {what} ({left} vs {right})")]
    Shape {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("validation failed at index {index}: {reason}")]
    Validation { index: usize, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("row {row} (line {line}), column `{column}`: {reason}")]
    Parse {
        row: usize,
        line: u64,
        column: String,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

impl UqError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UqError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed user input or settings rather
    /// than internal or numeric failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            UqError::InvalidArgument(_)
                | UqError::Shape { .. }
                | UqError::Validation { .. }
                | UqError::EmptyInput(_)
                | UqError::Parse { .. }
                | UqError::Format { .. }
                | UqError::Config(_)
        )
    }
}

pub type Result<T, E = UqError> = std::result::Result<T, E>;
