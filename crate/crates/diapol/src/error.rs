//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not conform for an operation.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A tensor produced by an op contains NaN or Inf.
    #[error("non-finite value in `{context}`")]
    NonFinite { context: String },

    /// Invalid argument to a numeric routine (e.g. non-positive temperature).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Unknown atomic action name or id.
    #[error("unknown action: {0}")]
    UnknownAction(String),

    /// Corpus file violates the line format.
    #[error("corpus error at line {line}: {message}")]
    Corpus { line: usize, message: String },

    /// Environment or schema inconsistency.
    #[error("environment error: {0}")]
    Env(String),

    /// Checkpoint file cannot be read or does not match the runtime setup.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Experiment configuration problem.
    #[error("config error: {0}")]
    Config(String),

    /// Training diverged or hit an unrecoverable state.
    #[error("training error: {0}")]
    Train(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
