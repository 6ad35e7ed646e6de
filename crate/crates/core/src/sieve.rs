//! Segmented sieve of Eratosthenes over arbitrary windows below 2^52.
//!
//! The sieve works on odd candidates only (2 is reinstated when a window
//! contains it) and processes a window in fixed-size segments so the marking
//! loop stays cache-resident. Base primes up to `sqrt(hi)` are generated once
//! by a plain odd sieve and shared immutably across segments, which makes the
//! per-segment work independent: with the `parallel` feature the segments fan
//! out over rayon, and every reduction merges integer counts by position, so
//! the output is identical for any segment size or worker count.
//!
//! Numbers below 2 are treated as composite. The addressable ceiling is
//! [`MAX_SIEVE_BOUND`] = 2^52, which keeps every intermediate product exact
//! in `u64`/`f64` arithmetic.

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Exclusive upper bound on sievable values (2^52).
pub const MAX_SIEVE_BOUND: u64 = 1 << 52;

/// Largest allowed base-prime table limit.
pub const MAX_BASE_PRIME_LIMIT: u64 = 100_000_000;

/// Execution strategy for segment processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Process segments one after another on the calling thread.
    Sequential,
    /// Fan segments out over the current rayon thread pool.
    #[cfg(feature = "parallel")]
    Parallel,
}

// Not derivable: the default variant depends on the feature set.
#[allow(clippy::derivable_impls)]
impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Tuning knobs for the segmented sieve.
#[derive(Debug, Clone, Copy)]
pub struct SieveConfig {
    /// Odd candidates per segment. The default of 2^20 entries covers
    /// 2^21 consecutive integers (~1 MiB of marking window as bytes,
    /// 128 KiB as bits).
    pub segment_entries: usize,
    /// Sequential or rayon-parallel segment processing.
    pub execution: Execution,
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig {
            segment_entries: 1 << 20,
            execution: Execution::default(),
        }
    }
}

impl SieveConfig {
    /// A sequential configuration with the default segment size.
    pub fn sequential() -> Self {
        SieveConfig {
            segment_entries: 1 << 20,
            execution: Execution::Sequential,
        }
    }
}

/// Half-open window `[lo, hi)` of integers to sieve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    lo: u64,
    hi: u64,
}

impl Window {
    /// Builds a window, rejecting empty ranges and ranges beyond
    /// [`MAX_SIEVE_BOUND`].
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidInput(format!(
                "window [{lo}, {hi}) is empty"
            )));
        }
        if hi > MAX_SIEVE_BOUND {
            return Err(Error::InvalidInput(format!(
                "window upper bound {hi} exceeds 2^52"
            )));
        }
        Ok(Window { lo, hi })
    }

    /// Inclusive lower bound.
    pub fn lo(&self) -> u64 {
        self.lo
    }

    /// Exclusive upper bound.
    pub fn hi(&self) -> u64 {
        self.hi
    }

    /// Number of integers in the window.
    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    /// Always false: construction rejects empty ranges.
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    /// True if `value` lies in `[lo, hi)`.
    pub fn contains(&self, value: u64) -> bool {
        value >= self.lo && value < self.hi
    }
}

/// Geometry of one measured point: `m` subintervals of length `h` centred
/// on `n`.
///
/// The window spans `[n - floor(m*h/2), n + ceil(m*h/2))`; for odd `m*h` the
/// centre is off by half a unit, which is negligible at the scales of
/// interest and absorbed by the systematic-error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalSpec {
    n: u64,
    h: u64,
    m: u64,
}

impl IntervalSpec {
    /// Validates `n`, `h`, `m`: the implied window must start at 2 or above
    /// and end below 2^52.
    pub fn new(n: u64, h: u64, m: u64) -> Result<Self> {
        if h == 0 || m == 0 {
            return Err(Error::InvalidInput(format!(
                "interval spec needs h >= 1 and m >= 1 (got h={h}, m={m})"
            )));
        }
        let delta_n = m.checked_mul(h).ok_or_else(|| {
            Error::InvalidInput(format!("m*h overflows u64 (m={m}, h={h})"))
        })?;
        let half_up = delta_n.div_ceil(2);
        if n < half_up + 2 {
            return Err(Error::InvalidInput(format!(
                "window around n={n} with m*h={delta_n} would start below 2"
            )));
        }
        let hi = n.checked_add(half_up).filter(|&v| v <= MAX_SIEVE_BOUND);
        if hi.is_none() {
            return Err(Error::InvalidInput(format!(
                "window around n={n} with m*h={delta_n} would exceed 2^52"
            )));
        }
        Ok(IntervalSpec { n, h, m })
    }

    /// Interval centre.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Subinterval length.
    pub fn h(&self) -> u64 {
        self.h
    }

    /// Number of subintervals.
    pub fn m(&self) -> u64 {
        self.m
    }

    /// Total window width `m * h`.
    pub fn delta_n(&self) -> u64 {
        self.m * self.h
    }

    /// The sieving window `[n - floor(m*h/2), n + ceil(m*h/2))`.
    pub fn window(&self) -> Window {
        let delta_n = self.delta_n();
        let start = self.n - delta_n / 2;
        Window {
            lo: start,
            hi: start + delta_n,
        }
    }
}

/// Per-subinterval prime counts for one [`IntervalSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    spec: IntervalSpec,
    counts: Vec<u32>,
}

impl CountVector {
    /// Wraps raw counts, checking length `m` and the bound `count <= h`.
    pub fn new(spec: IntervalSpec, counts: Vec<u32>) -> Result<Self> {
        if counts.len() as u64 != spec.m() {
            return Err(Error::InvalidInput(format!(
                "count vector has {} entries, spec wants m={}",
                counts.len(),
                spec.m()
            )));
        }
        if let Some(&bad) = counts.iter().find(|&&c| u64::from(c) > spec.h()) {
            return Err(Error::InvalidInput(format!(
                "subinterval count {bad} exceeds subinterval length h={}",
                spec.h()
            )));
        }
        Ok(CountVector { spec, counts })
    }

    pub fn spec(&self) -> &IntervalSpec {
        &self.spec
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
}

/// Immutable table of the primes up to a limit, shared across segments.
#[derive(Debug, Clone)]
pub struct BasePrimes {
    limit: u64,
    primes: Vec<u32>,
}

impl BasePrimes {
    /// All primes `<= limit`, ascending. Requires `2 <= limit <= 10^8`.
    pub fn up_to(limit: u64) -> Result<Self> {
        if !(2..=MAX_BASE_PRIME_LIMIT).contains(&limit) {
            return Err(Error::InvalidInput(format!(
                "base prime limit {limit} outside [2, {MAX_BASE_PRIME_LIMIT}]"
            )));
        }
        let mut primes = vec![2u32];
        if limit >= 3 {
            // Odd-only bitmap: bit i <-> the number 2i + 3.
            let entries = ((limit - 3) / 2 + 1) as usize;
            let mut words = vec![!0u64; entries.div_ceil(64)];
            let mut p = 3u64;
            while p * p <= limit {
                let idx = ((p - 3) / 2) as usize;
                if words[idx >> 6] & (1 << (idx & 63)) != 0 {
                    let mut mult = p * p;
                    while mult <= limit {
                        let j = ((mult - 3) / 2) as usize;
                        words[j >> 6] &= !(1 << (j & 63));
                        mult += 2 * p;
                    }
                }
                p += 2;
            }
            for i in 0..entries {
                if words[i >> 6] & (1 << (i & 63)) != 0 {
                    primes.push((2 * i + 3) as u32);
                }
            }
        }
        Ok(BasePrimes { limit, primes })
    }

    /// A table large enough for `w`, sized to `max(2, isqrt(hi - 1))`.
    pub fn for_window(w: &Window) -> Self {
        let limit = (w.hi() - 1).isqrt().max(2);
        // The window invariant hi <= 2^52 caps the limit at 2^26 < 10^8.
        Self::up_to(limit).expect("auto-sized base prime limit is in range")
    }

    /// The covered limit.
    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// The primes, ascending.
    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Odd primes only (drops the leading 2).
    fn odd_primes(&self) -> &[u32] {
        if self.primes.first() == Some(&2) {
            &self.primes[1..]
        } else {
            &self.primes
        }
    }

    fn check_covers(&self, w: &Window) -> Result<()> {
        let need = (w.hi() - 1).isqrt();
        if self.limit < need {
            return Err(Error::InsufficientBasePrimes {
                have: self.limit,
                need,
            });
        }
        Ok(())
    }
}

/// Primality bits for the odd candidates of one segment.
pub(crate) struct SievedSegment<'a> {
    first_odd: u64,
    len: usize,
    words: &'a [u64],
}

impl SievedSegment<'_> {
    /// Value of the last candidate.
    fn last_odd(&self) -> u64 {
        self.first_odd + 2 * (self.len as u64 - 1)
    }

    /// Number of primes in the segment.
    fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Calls `f` with every prime in the segment, ascending.
    fn for_each_prime(&self, mut f: impl FnMut(u64)) {
        for (wi, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                f(self.first_odd + 2 * (wi * 64 + b) as u64);
                bits &= bits - 1;
            }
        }
    }
}

/// Marks composites among the odd candidates `first_odd, first_odd+2, ...`
/// (`len` of them). `odd_base` must hold all odd primes up to the square
/// root of the last candidate.
fn sieve_one_segment(first_odd: u64, len: usize, odd_base: &[u32], words: &mut Vec<u64>) {
    debug_assert!(first_odd % 2 == 1 && first_odd >= 3 && len > 0);
    words.clear();
    words.resize(len.div_ceil(64), !0u64);
    let last = first_odd + 2 * (len as u64 - 1);
    for &p in odd_base {
        let p = u64::from(p);
        let p_sq = p * p;
        if p_sq > last {
            break;
        }
        // First odd multiple of p at or above max(p^2, first_odd): smaller
        // multiples have a smaller prime factor and p itself stays unmarked.
        let mult = if p_sq >= first_odd {
            p_sq
        } else {
            let mut k = first_odd.div_ceil(p);
            if k % 2 == 0 {
                k += 1;
            }
            k * p
        };
        if mult > last {
            continue;
        }
        // Consecutive odd multiples differ by 2p, i.e. p index steps.
        let mut idx = ((mult - first_odd) / 2) as usize;
        let step = p as usize;
        while idx < len {
            words[idx >> 6] &= !(1u64 << (idx & 63));
            idx += step;
        }
    }
    let slack = len & 63;
    if slack != 0 {
        *words.last_mut().expect("len > 0") &= (1u64 << slack) - 1;
    }
}

/// Splits `w` into segments, sieves each and maps `f` over the results.
/// Segment outputs are collected in window order regardless of execution.
pub(crate) fn map_segments<R, F>(
    w: &Window,
    base: &BasePrimes,
    cfg: &SieveConfig,
    f: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&SievedSegment<'_>) -> R + Sync,
{
    if cfg.segment_entries < 64 {
        return Err(Error::InvalidInput(format!(
            "segment_entries {} below minimum of 64",
            cfg.segment_entries
        )));
    }
    base.check_covers(w)?;

    let first = w.lo().max(3);
    let first_odd = first | 1;
    let odd_count = if first_odd >= w.hi() {
        0
    } else {
        (w.hi() - first_odd).div_ceil(2)
    };
    let entries = cfg.segment_entries as u64;
    let n_segs = odd_count.div_ceil(entries) as usize;
    let odd_base = base.odd_primes();

    let run = |s: usize| -> R {
        let seg_first_idx = s as u64 * entries;
        let seg_len = entries.min(odd_count - seg_first_idx) as usize;
        let seg_first_odd = first_odd + 2 * seg_first_idx;
        let mut words = Vec::new();
        sieve_one_segment(seg_first_odd, seg_len, odd_base, &mut words);
        f(&SievedSegment {
            first_odd: seg_first_odd,
            len: seg_len,
            words: &words,
        })
    };

    match cfg.execution {
        Execution::Sequential => Ok((0..n_segs).map(run).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel => Ok((0..n_segs).into_par_iter().map(run).collect()),
    }
}

/// Primality bitmap over a window: bit `i` is set iff `lo + i` is prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    lo: u64,
    len: u64,
    words: Vec<u64>,
}

impl Bitmap {
    fn zeroed(w: &Window) -> Self {
        Bitmap {
            lo: w.lo(),
            len: w.len(),
            words: vec![0u64; (w.len() as usize).div_ceil(64)],
        }
    }

    pub fn lo(&self) -> u64 {
        self.lo
    }

    pub fn hi(&self) -> u64 {
        self.lo + self.len
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn set(&mut self, value: u64) {
        let i = (value - self.lo) as usize;
        self.words[i >> 6] |= 1u64 << (i & 63);
    }

    /// True iff `value` is prime. Panics outside `[lo, hi)`.
    pub fn get(&self, value: u64) -> bool {
        assert!(
            value >= self.lo && value < self.hi(),
            "value {value} outside bitmap range [{}, {})",
            self.lo,
            self.hi()
        );
        let i = (value - self.lo) as usize;
        self.words[i >> 6] & (1u64 << (i & 63)) != 0
    }

    /// Number of primes in the window.
    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// The primes in the window, ascending.
    pub fn iter_primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let lo = self.lo;
            std::iter::successors((word != 0).then_some(word), |&b| {
                let rest = b & (b - 1);
                (rest != 0).then_some(rest)
            })
            .map(move |b| lo + (wi * 64 + b.trailing_zeros() as usize) as u64)
        })
    }
}

/// Sieve a window into a full primality bitmap with auto-sized base primes.
pub fn sieve_window(w: &Window) -> Bitmap {
    let base = BasePrimes::for_window(w);
    sieve_window_with(w, &base, &SieveConfig::default())
        .expect("auto-sized base primes always cover the window")
}

/// Sieve a window into a bitmap with a caller-supplied base-prime table.
///
/// The bitmap holds one bit per integer in the window; prefer
/// [`count_primes_with`] / [`subinterval_counts_with`] for wide windows where
/// only aggregates are needed.
pub fn sieve_window_with(w: &Window, base: &BasePrimes, cfg: &SieveConfig) -> Result<Bitmap> {
    let parts: Vec<Vec<u64>> = map_segments(w, base, cfg, |seg| {
        let mut primes = Vec::new();
        seg.for_each_prime(|p| primes.push(p));
        primes
    })?;

    let mut bm = Bitmap::zeroed(w);
    if w.contains(2) {
        bm.set(2);
    }
    for primes in parts {
        for p in primes {
            bm.set(p);
        }
    }
    Ok(bm)
}

/// Number of primes in a window, auto-sized base primes.
pub fn count_primes(w: &Window) -> u64 {
    let base = BasePrimes::for_window(w);
    count_primes_with(w, &base, &SieveConfig::default())
        .expect("auto-sized base primes always cover the window")
}

/// Number of primes in a window with a caller-supplied base-prime table.
pub fn count_primes_with(w: &Window, base: &BasePrimes, cfg: &SieveConfig) -> Result<u64> {
    let partial = map_segments(w, base, cfg, |seg| seg.count())?;
    let mut total: u64 = partial.into_iter().sum();
    if w.contains(2) {
        total += 1;
    }
    Ok(total)
}

/// Per-subinterval prime counts, auto-sized base primes.
pub fn subinterval_counts(spec: &IntervalSpec) -> CountVector {
    let base = BasePrimes::for_window(&spec.window());
    subinterval_counts_with(spec, &base, &SieveConfig::default())
        .expect("auto-sized base primes always cover the window")
}

/// Per-subinterval prime counts with a caller-supplied base-prime table.
///
/// Subinterval `k` covers `[start + k*h, start + (k+1)*h)` with
/// `start = n - floor(m*h/2)`; the subintervals exactly partition the window.
pub fn subinterval_counts_with(
    spec: &IntervalSpec,
    base: &BasePrimes,
    cfg: &SieveConfig,
) -> Result<CountVector> {
    let w = spec.window();
    let start = w.lo();
    let h = spec.h();

    // Each segment tallies its own contiguous slice of subintervals; slices
    // from adjacent segments may share a boundary subinterval, so the merge
    // below adds by absolute index.
    let partial: Vec<(u64, Vec<u32>)> = map_segments(&w, base, cfg, |seg| {
        let k_first = (seg.first_odd - start) / h;
        let k_last = (seg.last_odd() - start) / h;
        let mut local = vec![0u32; (k_last - k_first + 1) as usize];
        seg.for_each_prime(|p| {
            local[((p - start) / h - k_first) as usize] += 1;
        });
        (k_first, local)
    })?;

    let mut counts = vec![0u64; spec.m() as usize];
    for (k_first, local) in partial {
        for (j, c) in local.into_iter().enumerate() {
            counts[k_first as usize + j] += u64::from(c);
        }
    }
    if w.contains(2) {
        counts[((2 - start) / h) as usize] += 1;
    }

    let counts: Vec<u32> = counts
        .into_iter()
        .map(|c| {
            u32::try_from(c).map_err(|_| {
                Error::InvalidInput("subinterval count exceeds u32::MAX".into())
            })
        })
        .collect::<Result<_>>()?;
    CountVector::new(*spec, counts)
}
