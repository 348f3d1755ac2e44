use std::path::PathBuf;

pub use mapfuse_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by non-finite numbers.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Diverged(_) | Error::Tensor(TensorError::Numeric(_)))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
