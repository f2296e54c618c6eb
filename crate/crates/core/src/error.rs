use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied data was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A numerical procedure failed (breakdown, non-convergence, singularity).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// File input/output failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// A configuration document could not be parsed.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
