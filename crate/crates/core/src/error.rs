use alloc::string::String;

/// Errors raised by the analysis routines.
///
/// Negative mathematical answers (a gate that is not controlled, a family
/// without a simultaneous SVD) are verdicts, not errors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("structure check failed: {0}")]
    Structure(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
