//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by sieving, moment computation and fitting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The normalized variance `w = variance / mean` does not exist because
    /// the sample mean is zero. Reported explicitly instead of propagating a
    /// NaN into downstream fits.
    #[error("normalized variance undefined: sample mean is zero ({0})")]
    UndefinedW(String),

    /// An iterative fit failed to converge or produced a singular system.
    #[error("fit failed: {0}")]
    FitFailure(String),

    /// A base-prime table too small for the requested window was supplied.
    /// Unreachable through the auto-sizing entry points.
    #[error("base primes cover only {have} but the window needs {need}")]
    InsufficientBasePrimes { have: u64, need: u64 },
}

impl Error {
    /// True for errors caused by bad inputs (as opposed to numerical
    /// failures during an otherwise valid computation).
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_))
    }
}
