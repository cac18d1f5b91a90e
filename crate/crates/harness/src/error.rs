use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: line {line}: {msg}", path.display())]
    Config { path: PathBuf, line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{}: {msg}", path.display())]
    Idx { path: PathBuf, msg: String },

    #[error("schema mismatch in {}: {msg}", path.display())]
    Schema { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Engine(#[from] sparsepush::Error),

    #[error("verification failed: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// 1 for anything the user can fix in their inputs, 2 for failures of a
    /// well-formed run.
    pub fn exit_code(&self) -> i32 {
        use sparsepush::Error as E;
        match self {
            Self::Config { .. } | Self::Validation(_) | Self::Idx { .. } | Self::Schema { .. } | Self::CheckFailed(_) => 1,
            Self::Engine(E::InvalidConfig(_) | E::ScheduleParse { .. }) => 1,
            Self::Engine(_) | Self::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
