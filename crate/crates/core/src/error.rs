use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of operands do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value outside the numeric domain of an operation (NaN, infinity).
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was requested in a state that cannot serve it.
    #[error("invalid state: {0}")]
    State(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A layer-spec list whose shapes do not chain.
    #[error("invalid model spec: {0}")]
    Spec(String),

    /// Malformed weight, dataset, attribution, or image file.
    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line runner: 1 usage/config, 2 data/format, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::Spec(_) | Error::State(_) => 1,
            Error::Format(_) | Error::Io { .. } | Error::Dimension(_) | Error::Index { .. } => 2,
            Error::Domain(_) => 3,
        }
    }
}
