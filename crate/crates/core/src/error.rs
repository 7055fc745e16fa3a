use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, index ranges or partitions that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),
    /// A hyperparameter outside its valid domain.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Non-finite or otherwise unusable input values.
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error classes reported by the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::InvalidSchedule(_) => {
                ErrorCategory::Config
            }
            Error::Format { .. } | Error::Data(_) | Error::Io(_) => ErrorCategory::Data,
            Error::Structural(_) | Error::Input(_) | Error::Numeric(_) => ErrorCategory::Numeric,
        }
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
