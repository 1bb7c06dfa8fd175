use thiserror::Error;

/// Errors raised by the clickstream toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A record in an input file did not match its schema.
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    /// A statistic that is undefined for the given input (0/0 and friends).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
