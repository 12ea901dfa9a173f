use thiserror::Error;

/// Errors surfaced by the filtering, fitting and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A covariance matrix could not be factorized even after the bounded
    /// jitter escalation.
    #[error("covariance matrix is ill-conditioned: {0}")]
    IllConditioned(String),

    /// A regression design matrix is rank deficient.
    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    /// An observation model cannot be inverted at the given covariates.
    #[error("observation model not invertible: effective slope {slope:e} at {context}")]
    NonInvertible { slope: f64, context: String },

    /// Inputs violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity that must carry variation is constant.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The sampler rejected every proposal after burn-in.
    #[error("MCMC chain rejected all proposals after adaptation")]
    AllRejected,

    /// Too few posterior draws to summarize.
    #[error("too few posterior draws: have {have}, need at least {need}")]
    TooFewDraws { have: usize, need: usize },

    /// Field evolution produced a non-finite value.
    #[error("numerical instability: {0}")]
    Unstable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
