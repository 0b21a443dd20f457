use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported size N={n}: {hint}")]
    UnsupportedSize { n: usize, hint: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step size {dt} too large: {detail}; reduce dt")]
    StepSize { dt: f64, detail: String },

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
