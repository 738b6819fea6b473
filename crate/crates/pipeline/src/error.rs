use std::path::PathBuf;

use creditline_core::ingest::IngestError;
use creditline_econ::EstimationError;

/// Failure of a pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("[validation] {0}")]
    Validation(String),
    #[error("[ingest] {0}")]
    Ingest(#[from] IngestError),
    #[error("[{stage}] {message}")]
    Computation { stage: String, message: String },
    #[error("[{stage}] {source}")]
    Estimation { stage: String, source: EstimationError },
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }

    pub fn computation(stage: impl Into<String>, message: impl ToString) -> PipelineError {
        PipelineError::Computation { stage: stage.into(), message: message.to_string() }
    }

    /// Process exit code: 1 usage or I/O, 2 validation, 3 computation,
    /// 4 estimation.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Io { .. } => 1,
            PipelineError::Ingest(IngestError::Io { .. }) => 1,
            PipelineError::Config(_) | PipelineError::Validation(_) | PipelineError::Ingest(_) => 2,
            PipelineError::Computation { .. } => 3,
            PipelineError::Estimation { .. } => 4,
        }
    }
}
