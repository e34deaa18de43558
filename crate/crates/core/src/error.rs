use thiserror::Error;

/// Errors surfaced by the assimilation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The forward model produced a non-finite or exploding state.
    #[error("trajectory diverged at step {index}: component {component} is {value}")]
    Diverged {
        index: usize,
        component: usize,
        value: f64,
    },

    /// The regularized normal matrix failed to factorize or the factored
    /// solve did not reproduce the right-hand side. Signals insufficient
    /// observations for the requested window.
    #[error("normal equations ill-posed: {reason}")]
    IllPosed { reason: String },

    /// The doubling search for the observation weight found no admissible value.
    #[error("no admissible alpha: {reason}")]
    NoAlphaFound { reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The stacked parameter-derivative matrix has linearly dependent columns.
    #[error("parameter derivative matrix is rank deficient")]
    RankDeficient,

    #[error("model {model} has no parameter with index {index}")]
    UnknownParameter { model: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
