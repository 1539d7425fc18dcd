//! Pipeline-level errors, split so the binary can map them to exit codes:
//! validation problems exit 1, stage execution failures exit 2.

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// The config (or a CLI argument) is invalid; nothing was executed.
    #[error("validation error: {0}")]
    Validation(String),

    /// A stage failed while running; the run aborted at that stage.
    #[error("stage {stage:?} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: ratekit::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    pub fn validation(msg: impl Into<String>) -> Self {
        PipelineError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Stage { .. } | PipelineError::Io(_) => 2,
        }
    }
}
