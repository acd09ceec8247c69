use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared while adapting; usually the step size is too large.
    #[error("{stage}: diverged at sample {sample} ({detail}); step sizes {mu}")]
    Divergence {
        stage: String,
        sample: usize,
        detail: String,
        mu: String,
    },

    #[error("snapshot parse error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Raised by the steppers; the pipeline attaches stage and sample context.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite {0}")]
pub struct NonFinite(pub &'static str);
