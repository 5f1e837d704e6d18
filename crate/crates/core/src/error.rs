use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or vector dimensions disagree with what the operation expects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A sample point or frame index falls outside the acquisition grid.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A configuration document is inconsistent or incomplete.
    #[error("config error: {0}")]
    Config(String),

    #[error("solver diverged at iteration {iteration}: non-finite value in {variable}")]
    Divergence {
        iteration: usize,
        variable: &'static str,
    },

    /// Malformed MRST tensor data.
    #[error("format error: {0}")]
    Format(String),

    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
