use thiserror::Error;

/// Errors produced by the solver crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("unsupported boundary: {0}")]
    UnsupportedBoundary(String),

    #[error("kernel error: {0}")]
    Kernel(String),

    #[error("fixed point did not converge within {iters} iterations (last residual {residual:e})")]
    Convergence { iters: usize, residual: f64 },

    #[error("undefined permeability: dissipation {0:e} below threshold")]
    UndefinedPermeability(f64),

    #[error("stability error: {0}")]
    Stability(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
