use thiserror::Error;

/// Errors produced anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("fetch error{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Fetch { status: Option<u16>, message: String },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("attack {attack} failed: {message}")]
    Attack { attack: String, message: String },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// True for errors caused by the input data rather than the caller or the library.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::UnsupportedFormat(_)
                | Error::Fetch { .. }
                | Error::Encoding(_)
                | Error::Dimension { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
