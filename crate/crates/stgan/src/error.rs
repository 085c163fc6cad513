use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] stgan_core::Error),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 1 for bad input, 2 for a missing upstream
    /// artifact, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact(_) => 2,
            Error::Core(e) if e.is_numeric() => 3,
            _ => 1,
        }
    }
}
