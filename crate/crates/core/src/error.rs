use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eig:e})")]
    Covariance { min_eig: f64 },
    #[error("unsupported signal profile: {0}")]
    UnsupportedProfile(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("singular matrix in {0}")]
    Singular(String),
    #[error("Newton solver did not converge after {iterations} iterations (|grad| = {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("continuation failed at fraction {fraction} of the {stage} ramp")]
    PathFailure { stage: String, fraction: f64 },
    #[error("inconsistent result: {0}")]
    Inconsistent(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::Parameter { name: name.to_string(), reason: reason.into() }
    }

    /// Validation-type errors (bad input) as opposed to numerical or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Parameter { .. }
                | Error::Covariance { .. }
                | Error::UnsupportedProfile(_)
                | Error::DegenerateSignal(_)
                | Error::Parse(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::Inconsistent(_)
                | Error::NoConvergence { .. }
                | Error::PathFailure { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
