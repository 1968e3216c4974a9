use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: byte {offset}: {reason}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hybridboot_core::Error),
    #[error(transparent)]
    Training(#[from] hybridboot_core::nn::TrainError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        use hybridboot_core::Error as Core;
        let core = match self {
            Self::Config(_) => return 2,
            Self::Io { .. } | Self::Format { .. } | Self::Csv { .. } => return 3,
            Self::Core(e) => e,
            Self::Training(t) => &t.error,
        };
        match core {
            Core::Divergence { .. } => 4,
            Core::InvalidConfig(_) | Core::InvalidLevel(_) | Core::LayerShape { .. } | Core::UnsupportedStructure { .. } => 2,
            _ => 3,
        }
    }
}
