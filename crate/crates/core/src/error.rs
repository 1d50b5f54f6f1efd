use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bad price for asset {asset} on {date}: {message}")]
    Data {
        asset: String,
        date: String,
        message: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("insufficient history: step {t} needs a window of {window}")]
    InsufficientHistory { t: usize, window: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("empty universe: {0}")]
    EmptyUniverse(String),

    #[error("sample pool is empty")]
    EmptyPool,

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
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
