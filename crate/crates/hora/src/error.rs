//! Error type and exit-code contract shared by the library and the CLI.

use std::path::PathBuf;

/// Crate-wide error type.
///
/// Exit codes are part of the CLI's stable interface: 0 success,
/// 2 validation failure, 3 I/O failure, 4 oracle mismatch.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input document, argument, or configuration value violated a
    /// contract. `field` names the offending field as a path, e.g.
    /// `evidence[3].correct`.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// Filesystem failure while reading inputs or writing outputs.
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A cross-check between the greedy allocator and an exact oracle failed.
    /// `instance` carries the offending instance serialized as JSON so the
    /// failure can be replayed.
    #[error("oracle mismatch: {message}")]
    OracleMismatch { message: String, instance: String },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 2,
            Error::Io { .. } => 3,
            Error::OracleMismatch { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
