use thiserror::Error;

pub type Result<T, E = QdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("scoring error: {0}")]
    Scoring(String),
    #[error("emitter error: {0}")]
    Emitter(String),
    /// Raised by the CMA-ES sampler when the covariance cannot be repaired.
    #[error("emitter restart required: {0}")]
    RestartRequired(String),
    #[error("unsupported objective dimension {0} (only 2 is supported)")]
    UnsupportedDimension(usize),
    #[error("unsupported archive format_version {0}")]
    Version(u64),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl QdError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            QdError::InvalidArgument(_) | QdError::Config(_) | QdError::Validation(_) => 2,
            QdError::Io(_) | QdError::Parse { .. } | QdError::Version(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(QdError::InvalidArgument(msg.into()))
}
