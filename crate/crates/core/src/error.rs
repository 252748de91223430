use std::path::PathBuf;

/// Errors produced anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, extents or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A call made in a state or with an argument the callee does not accept.
    #[error("usage error: {0}")]
    Usage(String),

    /// A forward op or the loss produced NaN or infinity.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// Training diverged; carries a short snapshot for diagnosis.
    #[error("training diverged at step {step}: {snapshot}")]
    Diverged { step: usize, snapshot: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file whose bytes do not follow the expected layout.
    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
