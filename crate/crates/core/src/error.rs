use std::path::PathBuf;

/// Errors produced by the map, query, proposal and planning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("provider `{provider}` does not support {capability}")]
    Capability { provider: String, capability: &'static str },

    #[error("transport error calling {endpoint} after {attempts} attempt(s): {message}")]
    Transport { endpoint: String, attempts: u32, retryable: bool, message: String },

    #[error("unsupported map format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("proposal produced no object names")]
    EmptyProposal,

    #[error("option `{label}` has no skill above the binding threshold (best {best:.4})")]
    UnboundOption { label: String, best: f64 },

    #[error("generation error: {0}")]
    Generation(String),

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
