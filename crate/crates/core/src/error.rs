use thiserror::Error;

/// Errors raised by the solver stack.
///
/// Touchdown and iteration caps are *outcomes* of [`crate::solver::iterate_minimal`],
/// not errors; only invalid inputs and numerical guard failures end up here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-integrable boundary data: {0}")]
    NonIntegrable(String),

    #[error("no nonnegative solution exists for gamma = {gamma} > 2/3 at any lambda > 0")]
    Nonexistence { gamma: f64 },

    #[error("branch aborted: lambda = {lambda} ended with status {status}")]
    Branch { lambda: f64, status: String },

    #[error("eigen iteration stalled after {iterations} steps (last increment {increment:e})")]
    EigenStall { iterations: usize, increment: f64 },

    #[error("numerical guard: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_) | Error::Nonexistence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
