//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors surfaced by the pricing library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Input could not be read or decoded (file access, JSON syntax).
    #[error("parse error: {0}")]
    Parse(String),

    /// A scenario or argument violated a model invariant. `field` is the
    /// dotted path of the offending entry when known.
    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },

    /// A numerical routine could not produce a usable result.
    #[error("numerics error: {0}")]
    Numerics(String),

    /// An operation was called with arguments outside its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 parse, 3 validation, 4 numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::InvalidInput(_) => 2,
            Error::Validation { .. } => 3,
            Error::Numerics(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
