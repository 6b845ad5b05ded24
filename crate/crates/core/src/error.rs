use thiserror::Error;

/// Errors raised across the library.
///
/// The variants follow the failure classes used throughout the crate:
/// malformed shapes or indices are `Structural`, out-of-range numeric inputs
/// are `Domain`, and calls that are invalid for the current state of an
/// object (sampling an empty buffer, updating before warmup) are `State`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state error: {0}")]
    State(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! structural {
    ($($arg:tt)*) => { $crate::error::Error::Structural(format!($($arg)*)) };
}
macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
pub(crate) use domain;
pub(crate) use structural;
