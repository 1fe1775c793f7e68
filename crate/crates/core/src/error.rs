use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong dimensions, bad arguments.
    #[error("input error: {0}")]
    Input(String),

    /// The instance document does not match the expected structure.
    #[error("schema error: {0}")]
    Schema(#[from] serde_json::Error),

    /// The document parsed but violates an instance invariant.
    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A size cap was exceeded (terminal count, enumeration size, ...).
    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// External solver failure, with captured diagnostics.
    #[error("solver adapter error: {0}")]
    Adapter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
