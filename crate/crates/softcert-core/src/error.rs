//! Error type shared across the crate.

/// Errors produced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structural problems: mismatched shapes, non-composable layers,
    /// invalid hyper-parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad runtime inputs: out-of-range labels, empty datasets.
    #[error("input error: {0}")]
    Input(String),

    /// Operations applied against stale state, e.g. a partition computed
    /// for a different dataset.
    #[error("state error: {0}")]
    State(String),

    /// Malformed files (IDX, CIFAR batches, checkpoints).
    #[error("format error: {0}")]
    Format(String),

    /// Files that parse individually but disagree with each other,
    /// e.g. image/label count mismatch.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }
}
