use std::path::PathBuf;

use dvlnav_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, NavError>;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("{path}:{line}: {msg}")]
    Data {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: schema error: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("weights file: {0}")]
    Weights(String),
}

impl NavError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NavError::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NavError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            NavError::InvalidArgument(_) | NavError::Config(_) => 1,
            NavError::Data { .. }
            | NavError::Schema { .. }
            | NavError::Io { .. }
            | NavError::Weights(_) => 2,
            NavError::Singular(_) | NavError::Tensor(_) => 3,
        }
    }
}
