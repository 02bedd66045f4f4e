use std::path::{Path, PathBuf};

use hift_core::HiftError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error(transparent)]
    Core(#[from] HiftError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradCheck(_) | CliError::Core(HiftError::Numerical(_)) => 2,
            _ => 1,
        }
    }
}
