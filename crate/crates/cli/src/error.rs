use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A pipeline stage failed; `stage` names it in the diagnostic.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: cachecast::Error,
    },

    #[error("cannot read topology `{path}`: {source}")]
    ReadTopology {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("encoding output: {0}")]
    Csv(#[from] csv::Error),

    #[error("encoding output: {0}")]
    Json(#[from] serde_json::Error),
}

/// Tags a library error with the stage it came from.
pub fn stage(stage: &'static str) -> impl FnOnce(cachecast::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}
