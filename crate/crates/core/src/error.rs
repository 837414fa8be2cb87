use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A setting is out of its permitted range or inconsistent with another.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called with arguments that violate its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data failed a value check.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("reduction error: {0}")]
    Reduction(String),

    #[error("split error: {0}")]
    Split(String),
}
