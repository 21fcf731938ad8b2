use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed array file: {0}")]
    Format(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("cannot split {available} samples into the requested non-empty parts ({detail})")]
    Split { available: usize, detail: String },

    #[error("degenerate input: total probability mass is zero")]
    ZeroMass,

    #[error("calibration impossible: {0}")]
    Calibration(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("model directory error: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Manifest(err.to_string())
    }
}
