use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a precondition (bad argument, unknown id, out-of-range step).
    #[error("usage error: {0}")]
    Usage(String),

    /// Numerical domain violation, e.g. cosine distance against a zero vector.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent configuration (dimension mismatch between inputs, bad world file).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data; `record` names the offending record.
    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            record: record.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
