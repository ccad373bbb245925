use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bad feature file: {0}")]
    Format(String),

    #[error("truncated feature file: expected {expected} payload bytes, found {found}")]
    Length { expected: u64, found: u64 },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
