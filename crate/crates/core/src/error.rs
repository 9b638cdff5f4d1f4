use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested op.
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// An op produced NaN or an infinity, or a loss went non-finite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A softmax row had no finite entry.
    #[error("softmax: row {row} is entirely -inf (no valid distribution)")]
    DegenerateRow { row: usize },

    #[error("tape error: {0}")]
    Tape(String),

    #[error("missing gradient for parameter '{0}'")]
    MissingGradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape { .. } => 1,
            Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => 2,
            Error::Numeric(_)
            | Error::DegenerateRow { .. }
            | Error::Tape(_)
            | Error::MissingGradient(_) => 3,
        }
    }
}
