use std::path::PathBuf;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the exit code the CLI maps them to:
/// configuration problems, data problems and numeric/shape problems.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error in {path}: record {index}: {message}")]
    Parse {
        path: PathBuf,
        index: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocabulary { id: usize, size: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("span error: {0}")]
    Span(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from input data rather than configuration or
    /// a programming mistake.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Alignment(_)
                | Error::Format(_)
                | Error::Io { .. }
                | Error::DegenerateData(_)
                | Error::Vocabulary { .. }
                | Error::Length { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(format!($($arg)*))
    };
}
pub(crate) use dim_err;
