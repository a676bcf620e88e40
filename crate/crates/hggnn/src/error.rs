use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Failures surfaced by the tool, grouped by exit code.
#[derive(Debug, Error)]
pub enum AppError {
    /// Bad command line or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or insufficient input data (exit 2).
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Core(#[from] hggnn_core::Error),
}

impl AppError {
    pub fn usage(msg: impl Into<String>) -> Self {
        AppError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) | AppError::Io { .. } => 2,
            AppError::Core(e) if e.is_numeric() => 3,
            AppError::Core(hggnn_core::Error::UnknownArm { .. }) => 1,
            AppError::Core(_) => 2,
        }
    }
}
