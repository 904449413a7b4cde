use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped by how a caller should react: bad input,
/// a numeric failure inside the model, or a problem reading or writing
/// an artifact.
#[derive(Debug, Error)]
pub enum HobzError {
    #[error("{0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HobzError {
    pub fn validation(msg: impl Into<String>) -> Self {
        HobzError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        HobzError::Numeric(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        HobzError::Format(msg.into())
    }
}

impl From<csv::Error> for HobzError {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(io) => HobzError::Io(io),
                other => HobzError::Format(format!("{other:?}")),
            }
        } else {
            HobzError::Validation(err.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, HobzError>;
