use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A primitive or object violates one of its invariants.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("generation failed: {0}")]
    Generation(String),

    /// Malformed binary or text input. `offset` is a byte offset for binvox
    /// data and a line number for line-oriented formats.
    #[error("parse error at {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("simulation diverged at step {step}: {reason}")]
    Simulation { step: usize, reason: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Simulation { .. } | Error::Degenerate(_) => 4,
            _ => 3,
        }
    }
}
