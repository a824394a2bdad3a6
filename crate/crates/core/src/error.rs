use std::io;
use std::path::PathBuf;

use numcore::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: payload truncated, expected {expected} bytes, found {actual}", path.display())]
    Truncated { path: PathBuf, expected: usize, actual: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown band {token:?} for {satellite}")]
    UnknownBand { token: String, satellite: String },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("parcel leakage between train and validation: {}", parcels.join(", "))]
    Leakage { parcels: Vec<String> },
    #[error("non-finite gradient in {tensor} (element {index}, value {value})")]
    NonFinite { tensor: String, index: usize, value: f32 },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Format { path: path.into(), msg: format!("invalid JSON: {source}") }
    }

    /// Process exit code: 2 usage, 3 data/format, 4 leakage or contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Leakage { .. } | Error::Contract(_) => 4,
            Error::Tensor(TensorError::Contract { .. }) => 4,
            _ => 3,
        }
    }
}
