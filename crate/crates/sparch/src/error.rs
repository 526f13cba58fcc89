use thiserror::Error;

/// Errors produced by weight construction, simulation, likelihood
/// evaluation, estimation, and file I/O.
#[derive(Debug, Error)]
pub enum SparchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weight matrix violates an invariant: {0}")]
    InvalidWeights(String),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error(
        "regularity violation (Lemma 1): solved squared observations contain \
         negative components ({detail}); seed {seed}"
    )]
    RegularityViolation { detail: String, seed: u64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("parse error in {path}: {detail}")]
    ParseError { path: String, detail: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SparchError>;
