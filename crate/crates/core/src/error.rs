use std::path::PathBuf;

use thiserror::Error;

use crate::llm::LlmError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stale index: {0}")]
    StaleIndex(String),
    #[error("anchor not found for rule `{0}`")]
    AnchorNotFound(String),
    #[error("edit rejected: {0}")]
    EditCollision(String),
    #[error("characterization error: {0}")]
    Characterization(String),
    #[error("stale reference: {0}")]
    StaleReference(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("plan generation failed: {0}")]
    PlanGenerationFailed(String),
    #[error("fill failed: {0}")]
    FillFailed(String),
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("semantic test generation failed: {0}")]
    TestGenerationFailed(String),
    #[error("tool error: {0}")]
    Tool(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for this error: 2 for usage and configuration
    /// problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Precondition(_) | Error::Llm(LlmError::Config(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
