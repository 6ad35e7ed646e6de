//! Argument definitions for the `primespan` binary.

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "primespan",
    version,
    about = "Prime-count statistics in short intervals: sweeps, fits and Hardy-Littlewood checks"
)]
pub struct Cli {
    /// Worker threads for sieving and sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Measure one (N, h, m) point: moments, normalized variance, errors.
    Experiment {
        /// Interval centre.
        #[arg(long)]
        n: u64,
        /// Subinterval length.
        #[arg(long)]
        h: u64,
        /// Number of subintervals.
        #[arg(long)]
        m: u64,
        /// Population (m) instead of sample (m-1) variance divisor.
        #[arg(long)]
        population_divisor: bool,
        /// Also write the measurement as a one-row wpoints CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Count-vector cache directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },

    /// Sweep N at fixed (h, m) and write a wpoints CSV.
    Sweep {
        #[arg(long)]
        h: u64,
        #[arg(long)]
        m: u64,
        /// Smallest grid centre (log-spaced grid; default 1e9).
        #[arg(long)]
        n_min: Option<u64>,
        /// Largest grid centre (default 1e11).
        #[arg(long)]
        n_max: Option<u64>,
        /// Number of log-spaced grid points (default 13).
        #[arg(long)]
        points: Option<u32>,
        /// Explicit comma-separated centres; overrides the range options.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u64>>,
        /// Output wpoints CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        population_divisor: bool,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },

    /// Fit w = 1 - b/log N (intercept fixed at 1) to a wpoints CSV.
    FitB {
        /// Input wpoints CSV.
        #[arg(long)]
        input: PathBuf,
        /// Subinterval length the points were measured at (row annotation).
        #[arg(long)]
        h: u64,
        /// Subinterval count the points were measured at (row annotation).
        #[arg(long)]
        m: u64,
        /// Write/overwrite a one-row bfit CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the free-intercept diagnostic fit.
        #[arg(long)]
        free_intercept: bool,
    },

    /// Fit one alpha(h) parametrization to an alpha-points CSV.
    FitAlpha {
        /// Input alpha-points CSV (h,alpha,alpha_err).
        #[arg(long)]
        input: PathBuf,
        /// Parametrization kind: I, II or III.
        #[arg(long)]
        kind: String,
        /// Exclude points with h below this cut.
        #[arg(long, default_value_t = 200)]
        h_min: u64,
        /// Subinterval count annotation for the output row.
        #[arg(long)]
        m: u64,
        /// Write/overwrite a one-row alphafit CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scale parameter errors by sqrt(reduced chi2).
        #[arg(long)]
        inflate_errors: bool,
    },

    /// Full chain: sweeps for all (h, m), b fits, alpha derivation,
    /// parametrization fits and the B summary.
    Pipeline {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the configured cache directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },

    /// Truncated Hardy-Littlewood singular series with a convergence report.
    HlConstant {
        /// Comma-separated tuple offsets, e.g. 0,2.
        #[arg(long, value_delimiter = ',')]
        offsets: Vec<u64>,
        /// Truncation point of the prime product.
        #[arg(long, default_value_t = 1_000_000)]
        p_max: u64,
        /// Optional CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Count n <= x with n + offset prime for all offsets; compare to the
    /// Hardy-Littlewood first-order prediction.
    TupleCount {
        #[arg(long)]
        x: u64,
        #[arg(long, value_delimiter = ',')]
        offsets: Vec<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        p_max: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Tally prime counts in windows (x, x + lambda log x] for x <= n.
    Gallagher {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        lambda: f64,
        /// Sample every stride-th x (1 = full census).
        #[arg(long, default_value_t = 1)]
        stride: u64,
        /// Output CSV (k,count,empirical_freq,poisson_pred).
        #[arg(long)]
        out: PathBuf,
    },

    /// Chi-squared upper-tail probability Q(ndof/2, chi2/2).
    Pvalue {
        #[arg(long)]
        chi2: f64,
        #[arg(long)]
        ndof: usize,
    },
}
