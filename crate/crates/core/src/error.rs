use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("data error in {source_name} at line {line}: {msg}")]
    Data {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(source_name: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }
}
