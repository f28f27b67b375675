use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bgforecast::Error),

    #[error("{0} is not an initialized workspace (run `setup_directories` first)")]
    NotInitialized(PathBuf),

    #[error("raw dataset not found: {0}")]
    RawDatasetNotFound(PathBuf),

    #[error("configuration not found: {0}")]
    ConfigNotFound(PathBuf),

    #[error("no trained model at {0} (run `train_model` first)")]
    ArtifactNotFound(PathBuf),

    #[error("stale model `{model}`: artifact was trained with config hash {artifact} but the config now hashes to {config}; retrain it")]
    StaleModel {
        model: String,
        artifact: String,
        config: String,
    },

    #[error("unknown model `{name}`; available models: {available}")]
    UnknownModel { name: String, available: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
