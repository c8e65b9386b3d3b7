use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("modality error: {0}")]
    Modality(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("empty token sequence: {0}")]
    EmptySequence(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
