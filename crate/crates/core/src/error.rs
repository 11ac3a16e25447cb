use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty descriptor set: {0}")]
    EmptySet(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes format errors with the offending file.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        }
    }

    /// Process exit code used by the CLI: 2 for I/O failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
