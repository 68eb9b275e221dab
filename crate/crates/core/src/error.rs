use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid run configuration or schema mapping.
    #[error("config error: {0}")]
    Config(String),
    /// Input data that cannot be read, parsed or used.
    #[error("data error: {0}")]
    Data(String),
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Training produced a non-finite loss or weights.
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 data, 4 numeric divergence,
    /// 1 anything else (I/O while writing outputs).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::InvalidArgument(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Divergence(_) => 4,
            Error::Io(_) => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
