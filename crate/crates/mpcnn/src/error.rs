use std::path::Path;

/// Application errors carrying the process exit code: 2 for configuration
/// problems, 3 for data problems, 4 for internal-consistency failures.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Internal(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError::Data(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        AppError::Internal(msg.into())
    }
}

/// Classify a core error raised while processing *data* (images, labels,
/// datasets): invalid input and shape problems are data errors, the rest are
/// internal.
pub fn core_data_err(e: mpcnn_core::Error) -> AppError {
    match e {
        mpcnn_core::Error::InvalidInput(m) | mpcnn_core::Error::Shape(m) => AppError::Data(m),
        mpcnn_core::Error::Internal(m) => AppError::Internal(m),
        mpcnn_core::Error::NonFinite(m) => AppError::Internal(m),
    }
}

/// Classify a core error raised while interpreting *configuration*
/// (architectures, optimizer settings).
pub fn core_config_err(e: mpcnn_core::Error) -> AppError {
    match e {
        mpcnn_core::Error::InvalidInput(m) | mpcnn_core::Error::Shape(m) => AppError::Config(m),
        mpcnn_core::Error::Internal(m) => AppError::Internal(m),
        mpcnn_core::Error::NonFinite(m) => AppError::Internal(m),
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Data(format!("{}: {e}", path.display()))
}
