//! Hardy–Littlewood k-tuple machinery and the microscopic-scale Poisson
//! counting experiment.
//!
//! The singular series `L(t) = prod_p p^{k-1} (p - nu_t(p)) / (p-1)^k` is
//! accumulated in log space over the primes up to a truncation point;
//! factors tend to `1 + O(1/p^2)` once `p` clears every pairwise offset
//! difference, so the tail beyond 10^6 contributes below 1e-6. An
//! inadmissible tuple (one that covers all residue classes modulo some
//! prime) yields exactly 0.

use crate::error::{Error, Result};
use crate::models::poisson_pmf;
use crate::sieve::{sieve_window, BasePrimes, Window, MAX_SIEVE_BOUND};

/// Largest tuple size supported; larger tuples have no use here and blow up
/// the residue bookkeeping.
pub const MAX_TUPLE_K: usize = 8;

/// A set of distinct non-negative offsets `h_1 < h_2 < ... < h_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetTuple {
    offsets: Vec<u64>,
}

impl OffsetTuple {
    /// Validates strict monotonicity and `1 <= k <= 8`.
    pub fn new(offsets: Vec<u64>) -> Result<Self> {
        if offsets.is_empty() || offsets.len() > MAX_TUPLE_K {
            return Err(Error::InvalidInput(format!(
                "tuple size must be in [1, {MAX_TUPLE_K}], got {}",
                offsets.len()
            )));
        }
        if offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "offsets must be strictly increasing".into(),
            ));
        }
        Ok(OffsetTuple { offsets })
    }

    pub fn k(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn max_offset(&self) -> u64 {
        *self.offsets.last().expect("tuple is non-empty")
    }
}

impl std::fmt::Display for OffsetTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, o) in self.offsets.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, "}}")
    }
}

/// Number of distinct residue classes modulo `p` occupied by the tuple.
/// Always in `[1, min(k, p)]`.
pub fn nu(t: &OffsetTuple, p: u64) -> u64 {
    debug_assert!(p >= 2);
    let mut residues: Vec<u64> = t.offsets.iter().map(|&o| o % p).collect();
    residues.sort_unstable();
    residues.dedup();
    residues.len() as u64
}

/// Truncated singular series over the primes `p <= p_max`, in log space.
/// Returns exactly 0 for inadmissible tuples.
pub fn hl_constant(t: &OffsetTuple, p_max: u64) -> Result<f64> {
    if p_max < 2 {
        return Err(Error::InvalidInput(format!("p_max = {p_max} below 2")));
    }
    let base = BasePrimes::up_to(p_max)?;
    Ok(log_product(t, base.primes()))
}

/// Truncation report for the singular series: value at `p_max`, at
/// `2 * p_max`, and their absolute difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlConvergence {
    pub at_p_max: f64,
    pub at_double: f64,
    pub abs_delta: f64,
}

/// Evaluates the truncated product at `p_max` and `2 * p_max` in one pass.
pub fn hl_convergence(t: &OffsetTuple, p_max: u64) -> Result<HlConvergence> {
    if p_max < 2 {
        return Err(Error::InvalidInput(format!("p_max = {p_max} below 2")));
    }
    let base = BasePrimes::up_to(2 * p_max)?;
    let split = base.primes().partition_point(|&p| u64::from(p) <= p_max);
    let at_p_max = log_product(t, &base.primes()[..split]);
    let at_double = log_product(t, base.primes());
    Ok(HlConvergence {
        at_p_max,
        at_double,
        abs_delta: (at_double - at_p_max).abs(),
    })
}

/// Kahan-compensated sum of `log` factors; 0 the moment a factor vanishes.
fn log_product(t: &OffsetTuple, primes: &[u32]) -> f64 {
    let k = t.k() as f64;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &p in primes {
        let p = u64::from(p);
        let occupied = nu(t, p);
        if occupied == p {
            return 0.0;
        }
        let pf = p as f64;
        let term =
            (k - 1.0) * pf.ln() + ((p - occupied) as f64).ln() - k * (pf - 1.0).ln();
        let y = term - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum.exp()
}

/// Number of `n <= x` such that `n + h_i` is prime for every offset.
pub fn count_tuple_starts(x: u64, t: &OffsetTuple) -> Result<u64> {
    if x == 0 {
        return Err(Error::InvalidInput("x must be at least 1".into()));
    }
    let end = x
        .checked_add(t.max_offset())
        .and_then(|e| e.checked_add(1))
        .filter(|&e| e <= MAX_SIEVE_BOUND)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "x + max offset = {x} + {} exceeds the sieve range",
                t.max_offset()
            ))
        })?;
    let bm = sieve_window(&Window::new(0, end)?);
    let mut count = 0u64;
    for n in 1..=x {
        if t.offsets.iter().all(|&o| bm.get(n + o)) {
            count += 1;
        }
    }
    Ok(count)
}

/// First-order Hardy–Littlewood prediction `L(t) * x / log^k x`.
pub fn hl_prediction(x: u64, t: &OffsetTuple, p_max: u64) -> Result<f64> {
    let constant = hl_constant(t, p_max)?;
    let xf = x as f64;
    Ok(constant * xf / xf.ln().powi(t.k() as i32))
}

/// Tally of the counting experiment `pi(x + lambda log x) - pi(x) = k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GallagherHistogram {
    pub lambda: f64,
    pub stride: u64,
    /// Largest sampled `x`.
    pub n: u64,
    /// `counts[k]` = number of sampled `x` with exactly `k` primes in
    /// `(x, x + floor(lambda log x)]`.
    pub counts: Vec<u64>,
    /// Number of sampled `x`.
    pub samples: u64,
}

impl GallagherHistogram {
    /// Observed frequency of `k`.
    pub fn empirical_freq(&self, k: usize) -> f64 {
        let c = self.counts.get(k).copied().unwrap_or(0);
        c as f64 / self.samples as f64
    }

    /// Poisson reference `lambda^k e^{-lambda} / k!`.
    pub fn poisson_pred(&self, k: usize) -> f64 {
        poisson_pmf(self.lambda, k as u64)
    }

    /// Largest observed `k`.
    pub fn max_k(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    /// Total variation distance to the Poisson reference over `k <= k_max`.
    pub fn tv_distance(&self, k_max: usize) -> f64 {
        (0..=k_max)
            .map(|k| (self.empirical_freq(k) - self.poisson_pred(k)).abs())
            .sum::<f64>()
            / 2.0
    }
}

/// Counts primes in `(x, x + floor(lambda log x)]` for `x = 1, 1 + stride,
/// 1 + 2 stride, ... <= n` and tallies the outcomes.
///
/// A stride above 1 subsamples the census to keep large-`n` runs tractable;
/// the histogram then covers the sampled `x` only.
pub fn gallagher_histogram(n: u64, lambda: f64, stride: u64) -> Result<GallagherHistogram> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be > 0")));
    }
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let max_len = (lambda * (n as f64).ln()).floor() as u64;
    let end = n
        .checked_add(max_len)
        .and_then(|e| e.checked_add(1))
        .filter(|&e| e <= MAX_SIEVE_BOUND)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "window n + lambda log n = {n} + {max_len} exceeds the sieve range"
            ))
        })?;
    let bm = sieve_window(&Window::new(0, end)?);

    // Two monotone prime-counting cursors: both x and x + floor(lambda log x)
    // only move forward, so each integer is inspected once.
    let mut lo_pos = 0u64;
    let mut lo_count = 0u64;
    let mut hi_pos = 0u64;
    let mut hi_count = 0u64;
    let advance = |pos: &mut u64, count: &mut u64, to: u64| {
        while *pos < to {
            *pos += 1;
            if bm.get(*pos) {
                *count += 1;
            }
        }
    };

    let mut counts: Vec<u64> = Vec::new();
    let mut samples = 0u64;
    let mut x = 1u64;
    while x <= n {
        let len = (lambda * (x as f64).ln()).floor() as u64;
        advance(&mut lo_pos, &mut lo_count, x);
        advance(&mut hi_pos, &mut hi_count, x + len);
        let k = (hi_count - lo_count) as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
        samples += 1;
        x += stride;
    }
    Ok(GallagherHistogram {
        lambda,
        stride,
        n,
        counts,
        samples,
    })
}
