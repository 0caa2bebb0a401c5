use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad input: malformed records, failed preconditions, mismatched endpoints.
    #[error("validation error: {0}")]
    Validation(String),

    /// An input fell outside the domain of a shifted power law.
    #[error("domain error: {what} = {value} must exceed {name} = {shift}")]
    Domain {
        what: &'static str,
        value: f64,
        name: &'static str,
        shift: f64,
    },

    /// Optimizer or linear-algebra failure, or a non-finite result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the CLI: 1 for validation, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain { .. } => 1,
            Error::Numerical(_) => 2,
        }
    }
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numerical(format!("{what} is not finite ({value})")))
    }
}
