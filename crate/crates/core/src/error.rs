use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("bound check failed at step {step}: {what}")]
    Bound { step: usize, what: String },

    #[error("singular matrix at step {step}")]
    Singular { step: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("unknown identifier `{0}`")]
    Unknown(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that abort a single simulated path rather than
    /// a whole computation.
    pub fn is_path_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Bound { .. } | Error::Singular { .. }
        )
    }
}
