use thiserror::Error;

/// Errors raised by the simulator and its analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed to converge or met a singular system.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The request exceeds a configured size limit.
    #[error("capability error: {0}")]
    Capability(String),
    /// The physical model does not hold in the requested regime.
    #[error("model validity error: {0}")]
    ModelValidity(String),
    /// A requested eigenstate is not uniquely defined.
    #[error("ambiguous target: {0}")]
    Ambiguous(String),
    /// Configuration failed validation; every violation is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
