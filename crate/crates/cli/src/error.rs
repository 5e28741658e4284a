use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or malformed input data.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Numeric {
        stage: String,
        #[source]
        source: countquant_core::Error,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Attach a stage name to core errors.
pub trait StageContext<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T> StageContext<T> for countquant_core::Result<T> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|source| CliError::Numeric {
            stage: stage.to_string(),
            source,
        })
    }
}
