use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised while setting up or running a pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// Malformed or semantically invalid pipeline document.
    #[error("line {line}: {msg}")]
    Xml { line: u32, msg: String },

    /// Document-level failure detected before any data is processed.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Inconsistent mesh topology or geometry.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// A container or Ensight file does not follow its format.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Numerical or type failure inside a filter.
    #[error("filter '{id}': {msg}")]
    Filter { id: String, msg: String },

    /// Plain numerical failure not yet attributed to a filter.
    #[error("{0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn filter(id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Filter {
            id: id.into(),
            msg: msg.into(),
        }
    }

    /// Attach a filter id to errors that do not carry one yet.
    pub fn in_filter(self, id: &str) -> Self {
        match self {
            Error::Numeric(msg) | Error::Mesh(msg) => Error::filter(id, msg),
            other => other,
        }
    }

    /// True for errors found while checking the document, before data flows.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Xml { .. } | Error::Validation(_))
    }
}
