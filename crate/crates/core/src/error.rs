use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid torus: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A size cap was hit (edge stream, pair loop, FFT, enumeration).
    #[error("resource cap exceeded: {what} needs {requested}, cap is {cap}")]
    Resource {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("degenerate component index: {0}")]
    DegenerateIndex(String),

    #[error("eigen solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    Convergence { iterations: usize, best_residual: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("Neumann series diverges: lambda1(Q) = {0} >= 1")]
    Divergence(f64),

    /// The horizon cap was reached before the stopping rule fired; the
    /// lengths found so far are returned.
    #[error("horizon cap T = {horizon} reached before the excursion stopping rule")]
    Truncation { horizon: f64, partial: Vec<f64> },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("usage: {0}")]
    Usage(String),
}
