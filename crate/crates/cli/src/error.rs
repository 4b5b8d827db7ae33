use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input {}: run `{stage}` first", path.display())]
    MissingInput { path: PathBuf, stage: &'static str },
    #[error("stage {stage} failed: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: insub_core::Error,
    },
    #[error("stage {stage} failed: {message}")]
    Invalid { stage: &'static str, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for failures
    /// inside a stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingInput { .. } => 2,
            _ => 3,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            CliError::Numerical { stage, .. } | CliError::Invalid { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags a library error with the stage it happened in.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for insub_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Numerical { stage, source })
    }
}
