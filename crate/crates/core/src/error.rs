use std::io;

use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),

    #[error("data error in layer `{layer}`: {reason}")]
    Data { layer: String, reason: String },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("empty spectrum: no strictly positive eigenvalues")]
    EmptySpectrum,

    #[error("too few eigenvalues: need at least {required}, found {found}")]
    TooFewEigenvalues { found: usize, required: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infinite exponent: every tail value equals xmin")]
    InfiniteAlpha,

    #[error("evaluation point {0} lies on the spectral support")]
    Support(f64),

    #[error("no eigenvalue reaches the ECS threshold {0}")]
    EmptyEcs(f64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular spectrum: {0}")]
    SingularSpectrum(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the input data rather than the numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numeric(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
