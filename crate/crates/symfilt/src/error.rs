use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("not a PGM file (magic {0:?})")]
    NotPgm(String),
    #[error("unsupported image: {0}")]
    Unsupported(&'static str),
    #[error("malformed PGM: {0}")]
    Malformed(&'static str),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file version {0} is not supported")]
    ModelVersion(u32),
    #[error(transparent)]
    Numeric(#[from] symfilt_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical core rather than of input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
