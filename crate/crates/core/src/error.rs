use thiserror::Error;

/// Errors raised by the spectral analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported map: {0}")]
    UnsupportedMap(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("coefficient band {band} too small: tail energy ratio {ratio:.3e} exceeds 1e-10")]
    BandTooSmall { band: usize, ratio: f64 },

    #[error("Gram matrix is not positive definite (Cholesky failed after jitter)")]
    NotPositiveDefinite,

    #[error("singular Gram matrix: {0}")]
    SingularGram(String),

    #[error("eigensolver failure: {0}")]
    EigFailure(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal rank loss of a snapshot matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankWarning {
    pub numerical_rank: usize,
    pub expected_rank: usize,
}

/// Non-fatal reduction of a requested compression rank.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankDeficiency {
    pub requested: usize,
    pub effective: usize,
}
