//! Command-line front end: experiment sweeps, fits, count caching and CSV
//! emission.
//!
//! Exit codes: 0 on success, 1 on input errors (bad flags, malformed config
//! or CSV, unwritable paths), 2 on numerical failures (undefined moments,
//! non-convergent fits).

pub mod cache;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod pipeline;

use primespan_core::Error as CoreError;

/// Error with the process exit code baked in.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: flags, config files, CSV contents, I/O. Exit code 1.
    Input(String),
    /// Numerical failure in an otherwise valid computation. Exit code 2.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("i/o error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs `f` inside a rayon pool of the requested size; 0 means the default
/// pool (all cores). Without the `parallel` feature the thread count is
/// ignored and everything runs sequentially.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("failed to build thread pool")
                .install(f)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads > 1 {
            log::warn!("built without the `parallel` feature; --threads ignored");
        }
        f()
    }
}
