//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("atlas error: {0}")]
    Atlas(String),

    #[error("zero-variance rows at indices {0:?}")]
    DegenerateRows(Vec<usize>),

    #[error("zero-variance columns at indices {0:?}")]
    DegenerateColumns(Vec<usize>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code convention: 2 for validation problems, 3 for
    /// numerical/convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Atlas(_)
            | Error::Shape(_)
            | Error::Index(_) => 2,
            Error::DegenerateRows(_)
            | Error::DegenerateColumns(_)
            | Error::Rank(_)
            | Error::Convergence(_)
            | Error::Numerical(_) => 3,
        }
    }
}
