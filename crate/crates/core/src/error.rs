use std::path::PathBuf;

use thiserror::Error;

use crate::trajdata::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A bundle failed validation. The first violation is shown; all are kept.
    #[error("invalid bundle: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    InvalidBundle(Vec<Violation>),

    /// Caller-supplied data or parameters violate an operation's precondition.
    #[error("{0}")]
    InvalidInput(String),

    /// A numerical routine failed (non-convergence, loss of definiteness, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is attributable to user input (as opposed to an internal fault).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}
