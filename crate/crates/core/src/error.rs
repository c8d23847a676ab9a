use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("factorization failed in {context}: {message}")]
    Factorization { context: &'static str, message: String },

    #[error("eigensolver did not converge: {0}")]
    Eigen(String),

    #[error("non-finite state detected at step {step}")]
    NonFinite { step: usize },

    #[error("Picard iteration failed to converge at step {step} after {iterations} iterations (increment {increment:e})")]
    Picard { step: usize, iterations: usize, increment: f64 },

    #[error("{0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
