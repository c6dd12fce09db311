use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("near-field divergence at {location}: innermost shell ratio {ratio:.3}")]
    Divergence { location: String, ratio: f64 },
    #[error("admissible set is empty: n*Lambda = {n_lambda} < lambda = {lambda}")]
    Infeasible { n_lambda: f64, lambda: f64 },
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("support error: {0}")]
    Support(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
