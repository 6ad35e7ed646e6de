//! Statistics of prime counts in short intervals.
//!
//! The library measures how many primes fall into each of `m` consecutive
//! subintervals of length `h` centred on a large integer `N`, and fits the
//! normalized variance `w = variance / mean` of those counts against
//! `w = 1 - b(h, m) / log N`. Chaining the fits over `h` recovers the
//! finite-size correction to the mesoscopic variance,
//! `variance ~ (h / log^2 N) * (log(N/h) - B)`, with `B` close to
//! `gamma + log(2 pi) - 1`.
//!
//! Modules follow the processing chain:
//!
//! * [`sieve`] — segmented, odd-only sieve of Eratosthenes for windows up to
//!   2^52, plus per-subinterval prime counts.
//! * [`experiment`] — sample moments, normalized variance and the systematic /
//!   statistical error estimates attached to each measured point.
//! * [`models`] — closed-form predictions: asymptotic moments, the
//!   `alpha(h)` parametrizations, the corrected variance and the Poisson law.
//! * [`fitting`] — weighted least squares for `b` and the `alpha`
//!   parametrizations, chi-squared goodness of fit and p-values.
//! * [`ktuple`] — Hardy–Littlewood singular series, tuple-start counting and
//!   the Poisson counting experiment in windows of length `lambda * log x`.
//!
//! With the default `parallel` feature, segment sieving and sweep evaluation
//! fan out over rayon. Every parallel reduction merges integers by position,
//! so results are bit-identical to the sequential fallback at any worker
//! count.

pub mod error;
pub mod experiment;
pub mod fitting;
pub mod ktuple;
pub mod models;
pub mod sieve;

mod special;

pub use error::{Error, Result};
