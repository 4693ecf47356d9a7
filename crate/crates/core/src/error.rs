use thiserror::Error;

/// Crate-wide error type. Variants map onto process exit codes in the CLI:
/// config errors exit 2, I/O and format errors exit 3, numeric failures exit 4.
#[derive(Debug, Error)]
pub enum DriveError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("unsupported version: {0}")]
    UnsupportedVersion(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, DriveError>;

impl DriveError {
    pub fn contract(msg: impl Into<String>) -> Self {
        DriveError::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        DriveError::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        DriveError::Format { offset, msg: msg.into() }
    }
}
