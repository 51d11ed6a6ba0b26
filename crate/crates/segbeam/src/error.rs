//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the beamforming, simulation, and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data is malformed (NaN/Inf samples, out-of-order indices, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A numerically impossible state was reached (singular solve, negative
    /// denominator in a Woodbury step).
    #[error("numerical breakdown: {0}")]
    Numerical(String),

    /// Unsupported or malformed file contents.
    #[error("unsupported format: {0}")]
    Format(String),

    /// An I/O failure, with the offending path attached.
    #[error("{path}: {source}")]
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
}

pub type Result<T> = std::result::Result<T, Error>;
