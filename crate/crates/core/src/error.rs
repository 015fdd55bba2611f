use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KgcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KgcError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Invalid configuration. The message starts with the offending section.
    #[error("config error: {0}")]
    Config(String),

    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl KgcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgcError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        KgcError::Config(msg.into())
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        KgcError::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code: 2 for configuration/contract problems, 3 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            KgcError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
