use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {what} ({}); run `asdl {stage}` first", path.display())]
    Missing { what: String, path: PathBuf, stage: &'static str },
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(asdl_core::Error),
}

impl AppError {
    /// Process exit status: 2 configuration, 3 missing prerequisite,
    /// 4 numerical divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Missing { .. } => 3,
            AppError::Divergence(_) => 4,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        AppError::Format { path: path.into(), msg: msg.into() }
    }
}

impl From<asdl_core::Error> for AppError {
    fn from(e: asdl_core::Error) -> Self {
        match e {
            asdl_core::Error::Divergence(m) => AppError::Divergence(m),
            asdl_core::Error::Config(m) => AppError::Config(m),
            other => AppError::Core(other),
        }
    }
}
