//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value or structure violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A feature expression failed to parse; `offset` is the byte offset
    /// of the first offending character.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A parsed expression carries indices outside their declared bounds.
    #[error("validation error: {0}")]
    Validation(String),

    /// A cell history is unusable for the requested operation.
    #[error("cell {cell_id}: {message}")]
    Cell { cell_id: String, message: String },

    /// Checkpoint file is unreadable or inconsistent.
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn cell(cell_id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Cell {
            cell_id: cell_id.into(),
            message: msg.into(),
        }
    }
}
