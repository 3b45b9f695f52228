use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A file exists but its contents are unusable.
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] sdefilter::Error),
}

impl BenchError {
    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        BenchError::Data { path: path.into(), message: message.into() }
    }
}
