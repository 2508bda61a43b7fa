use alloc::string::String;

/// Errors surfaced by the core operations.
///
/// `Shape` means caller-visible dimension problems (a fragment smaller than
/// the kernel, mismatched channel counts). `Internal` flags broken internal
/// bookkeeping such as a defragmentation double-write; reaching it indicates
/// a planner or tape bug, not bad user input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
