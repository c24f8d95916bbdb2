use std::io;

use thiserror::Error;

/// Errors produced by the asg-core crate.
#[derive(Debug, Error)]
pub enum AsgError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(u64),

    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("duplicate token {token:?} at line {line}")]
    DuplicateToken { token: String, line: usize },

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("invalid UTF-8 in vocabulary: {0}")]
    InvalidUtf8(#[from] std::string::FromUtf8Error),

    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad user input: arguments, unknown tokens, degenerate labels.
    Validation,
    /// Missing files, unreadable or malformed containers.
    Io,
    /// Numeric or shape inconsistencies in otherwise well-formed data.
    Numeric,
}

impl AsgError {
    pub fn class(&self) -> ErrorClass {
        match self {
            AsgError::Io(_)
            | AsgError::BadMagic { .. }
            | AsgError::UnsupportedVersion(_)
            | AsgError::Truncated { .. }
            | AsgError::TrailingBytes(_)
            | AsgError::InvalidUtf8(_)
            | AsgError::Csv { .. } => ErrorClass::Io,
            AsgError::NonFinite { .. } | AsgError::DimensionMismatch(_) | AsgError::Shape(_) => {
                ErrorClass::Numeric
            }
            AsgError::InvalidArgument(_)
            | AsgError::OutOfRange { .. }
            | AsgError::DuplicateToken { .. }
            | AsgError::UnknownToken(_) => ErrorClass::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, AsgError>;
