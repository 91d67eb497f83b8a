use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("validation failed for `{id}`: {reason}")]
    Validation { id: String, reason: String },

    #[error("caption incomplete: field `{0}` is missing or empty")]
    CaptionIncomplete(&'static str),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("empty playlist: {0}")]
    EmptyPlaylist(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training produced a non-finite loss; carries a JSON snapshot of the
    /// failing step.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            id: id.into(),
            reason: reason.into(),
        }
    }
}
