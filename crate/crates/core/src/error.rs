use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("backward already ran on this graph; call reset_grads first")]
    BackwardTwice,

    #[error("unsupported WAV {field}: {detail}")]
    Wav { field: &'static str, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("record `{id}`: {detail}")]
    Record { id: String, detail: String },

    #[error("config field `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("corrupt feature file: {0}")]
    FeatureFile(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn record(id: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Record {
            id: id.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that happen while computing (non-finite values,
    /// unreadable checkpoints) rather than from bad user input.
    pub fn is_runtime_failure(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Checkpoint(_) | Error::BackwardTwice
        )
    }
}
