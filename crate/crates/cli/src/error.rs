use std::io;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid config file, flags or input data.
    #[error("config error: {0}")]
    Config(String),

    /// A core-library failure, tagged with the module that raised it.
    #[error("runtime error in {module}: {source}")]
    Runtime {
        module: &'static str,
        #[source]
        source: replicator_core::Error,
    },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime { .. } | Self::Io { .. } => EXIT_RUNTIME,
        }
    }
}

/// Tags core errors with their module.
pub trait Within<T> {
    fn within(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Within<T> for replicator_core::Result<T> {
    fn within(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Runtime { module, source })
    }
}
