use thiserror::Error;

/// Errors shared across the crate.
///
/// Every fallible operation reports which precondition failed and with what
/// values, so callers can surface the message directly.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor shape did not satisfy an operation's requirements.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument (stride, ratio, threshold, ...) was out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An internal consistency rule was violated (e.g. a variable used with
    /// the wrong gradient tape, or a checkpoint that does not match the model).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A serialized file (tensor container, checkpoint, dataset, config) was
    /// malformed. The message names the offending field.
    #[error("format error: {0}")]
    Format(String),

    /// An underlying I/O failure.
    ///
    /// The inner error is embedded in the message rather than exposed as a
    /// `source()`, so chain-printing reporters do not repeat it.
    #[error("io error: {0}")]
    Io(std::io::Error),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn state_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidState(msg.into()))
}

pub(crate) fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}
