use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fedtrade::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("audit failed: {0}")]
    Audit(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Json { .. } => 2,
            HarnessError::Core(fedtrade::Error::Capacity { .. }) => 3,
            HarnessError::Io { .. } => 4,
            HarnessError::Csv { source, .. } if source.is_io_error() => 4,
            HarnessError::Audit(_) => 5,
            HarnessError::Core(_) | HarnessError::Csv { .. } => 1,
        }
    }
}
