use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text. `offset` is a byte offset into the offending line.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// EXPLAIN document is missing something we need. `path` is a JSON-pointer-ish location.
    #[error("cannot import plan at {path}: {message}")]
    Import { path: String, message: String },

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn import(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Import {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures that come from numerics rather than bad input or config.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Singular(_))
    }
}
