use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("time step tau={tau:e} violates tau <= h^2/pi = {limit:e} (h={h:e})")]
    CflViolation { tau: f64, h: f64, limit: f64 },

    #[error("evolution diverged at step {step}")]
    Diverged { step: usize },

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable kebab-case identifier, used for machine-parsable CLI failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidProfile(_) => "invalid-profile",
            Error::CflViolation { .. } => "cfl-violation",
            Error::Diverged { .. } => "diverged",
            Error::NotConverged { .. } => "not-converged",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
