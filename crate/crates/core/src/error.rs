use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail {
    (UnsupportedDimension, $d:expr) => {
        return Err($crate::error::Error::UnsupportedDimension($d))
    };
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
