//! Crate-wide error type.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid spectral data (non-positive eigenvalue, empty block, bad certificate, ...).
    #[error("invalid spec: {0}")]
    Spec(String),
    /// Argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A level or coordinate that does not exist in the basis.
    #[error("unknown index: {0}")]
    Index(String),
    /// A computation that cannot reach the requested accuracy with the given inputs.
    #[error("precision error: {0}")]
    Precision(String),
    /// Observed behaviour contradicts a declared contract; the message carries the witness.
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn index(msg: impl Into<String>) -> Self {
        Error::Index(msg.into())
    }
}
