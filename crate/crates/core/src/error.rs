use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (dimension mismatch, empty input, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix expected to be positive semidefinite had an eigenvalue below
    /// the clamping tolerance.
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    /// A numerical computation left the representable range (overflow to
    /// non-finite values, singular system, ...).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A data file did not conform to its format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
