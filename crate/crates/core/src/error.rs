use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Layouts, shapes or model identities disagree.
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The operation is not allowed in the current state.
    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A model package or persisted record could not be read.
    #[error("load error in `{field}`: {reason}")]
    Load { field: String, reason: String },

    #[error("unsupported format_version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The detector rejects the unedited image, so no strength range exists.
    #[error("invalid reference: {0}")]
    InvalidReference(String),

    #[error("plugin error: {0}")]
    Plugin(String),

    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn load(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
