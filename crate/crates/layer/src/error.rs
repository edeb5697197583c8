use std::io;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] layer_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: byte {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("{}: file not found", .0.display())]
    Missing(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Machine-readable tag for the error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) => e.kind(),
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Json { .. } => "schema",
            Error::Missing(_) => "missing-file",
            Error::Usage(_) => "usage",
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            Error::Missing(path.to_path_buf())
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn format(path: &Path, offset: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), offset: offset as u64, message: message.into() }
    }

    pub fn json(path: &Path, e: serde_json::Error) -> Self {
        Error::Json { path: path.to_path_buf(), message: e.to_string() }
    }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
