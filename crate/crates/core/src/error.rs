use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or dimensionalities that do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("invalid evaluation: {0}")]
    InvalidEvaluation(String),

    #[error("cannot select from an empty container {0}")]
    EmptyContainer(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("task evaluation failed: {0}")]
    Task(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
