use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::hdr::HdrError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate covariance (condition number {0:.3e})")]
    DegenerateCovariance(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("hdr: {0}")]
    Hdr(#[from] HdrError),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("png: {0}")]
    Png(String),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Adapter for `map_err` that tags an I/O error with its path.
    pub(crate) fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::File { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
