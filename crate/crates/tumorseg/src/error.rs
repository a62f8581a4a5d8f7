use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("experiment {0} panicked")]
    Panicked(String),
    #[error(transparent)]
    Core(#[from] tumorseg_core::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    /// Configuration problems are reported with a distinct exit status.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Core(tumorseg_core::Error::Config(_))
        )
    }
}
