//! Sample statistics of per-subinterval prime counts.
//!
//! Moments are accumulated as exact integers (`sum p_k` in `u64`,
//! `sum p_k^2` in `u128`) and divided once at the end, so every summary is a
//! deterministic function of the counts alone. For `h = 1` the counts are
//! 0/1, the first and second sample moments coincide bit for bit, and with
//! the population divisor `w` equals `1 - mean` exactly because it is
//! evaluated as `second_moment / mean - mean`.
//!
//! Error model attached to each point, in the normal approximation with
//! `mu = h / log N` and `sigma^2 = (h / log^2 N) log(N/h)`:
//!
//! * systematic: the window spans `Delta N = m h`, so quoting a single `N`
//!   shifts the mean by up to
//!   `2 h atanh(Delta N / 2N) / (log(N - Delta N/2) log(N + Delta N/2))`,
//!   first order `m h^2 / (N log^2 N)`, relative `m h / (N log N)`;
//! * statistical: `sigma / mu = sqrt(log(N/h) / h)`;
//! * the standard error of `w` uses the delta method with independent
//!   sample mean and variance: `w_err = w sqrt(2/(m-1) + var/(m mean^2))`.
//!   A seeded bootstrap is available as a cross-check; fits use the delta
//!   form.

use crate::error::{Error, Result};
use crate::sieve::{
    subinterval_counts_with, BasePrimes, CountVector, IntervalSpec, SieveConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Divisor convention for the sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceDivisor {
    /// Unbiased `m - 1` divisor (default).
    #[default]
    Sample,
    /// Population `m` divisor; makes the `h = 1` identity `w = 1 - mean`
    /// exact.
    Population,
}

/// Moments of one count vector with the attached error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    /// Primes per subinterval.
    pub mean: f64,
    /// Second raw moment `<p^2>`.
    pub second_moment: f64,
    /// Variance under the chosen divisor.
    pub variance: f64,
    /// Normalized variance `variance / mean`.
    pub w: f64,
    /// Relative statistical error of the mean.
    pub stat_rel_err: f64,
    /// Relative systematic error of the mean.
    pub sys_rel_err: f64,
    /// Absolute systematic error of the mean (exact two-log form).
    pub sys_abs_err_mean: f64,
    /// Absolute systematic error of the variance (first-order form).
    pub sys_abs_err_variance: f64,
    /// Delta-method standard error of `w`.
    pub w_err: f64,
}

/// One measured point of a sweep: abscissa `x = 1 / log N` and the
/// normalized variance with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WPoint {
    pub n: u64,
    /// `1 / log n`, full precision.
    pub x: f64,
    pub w: f64,
    pub w_err: f64,
}

/// Sample moments and error estimates for a count vector.
///
/// Needs `m >= 2`. Fails with [`Error::UndefinedW`] when every count is
/// zero, rather than letting a NaN reach the fits.
pub fn moments(c: &CountVector, divisor: VarianceDivisor) -> Result<MomentSummary> {
    let spec = c.spec();
    let m = spec.m();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "moments need m >= 2 subintervals, got m={m}"
        )));
    }
    let mut sum: u64 = 0;
    let mut sum_sq: u128 = 0;
    for &count in c.counts() {
        sum += u64::from(count);
        sum_sq += u128::from(count) * u128::from(count);
    }
    if sum == 0 {
        return Err(Error::UndefinedW(format!(
            "all {m} counts are zero for n={}, h={}",
            spec.n(),
            spec.h()
        )));
    }

    let mf = m as f64;
    let mean = sum as f64 / mf;
    let second_moment = sum_sq as f64 / mf;

    // m * sum_sq - sum^2 = m^2 * Var_pop >= 0, exactly in integers.
    let dev_num = m as u128 * sum_sq - u128::from(sum) * u128::from(sum);
    let variance = match divisor {
        VarianceDivisor::Sample => dev_num as f64 / (m as u128 * (m - 1) as u128) as f64,
        VarianceDivisor::Population => dev_num as f64 / (m as u128 * m as u128) as f64,
    };
    // The population route divides moments instead of using `variance`:
    // when all counts are 0/1 (h = 1), second_moment == mean bit for bit,
    // so w == 1 - mean with no rounding slack.
    let w = match divisor {
        VarianceDivisor::Sample => variance / mean,
        VarianceDivisor::Population => second_moment / mean - mean,
    };

    let (n, h, mf64) = (spec.n() as f64, spec.h() as f64, m as f64);
    let mut summary = MomentSummary {
        mean,
        second_moment,
        variance,
        w,
        stat_rel_err: relative_statistical_error(n, h),
        sys_rel_err: relative_systematic_error(n, h, mf64),
        sys_abs_err_mean: systematic_error_mean_exact(n, h, mf64)?,
        sys_abs_err_variance: systematic_error_variance(n, h, mf64),
        w_err: 0.0,
    };
    summary.w_err = w_standard_error(&summary, spec)?;
    Ok(summary)
}

/// Exact systematic error of the mean:
/// `2 h atanh(Delta N / 2N) / (log(N - Delta N/2) log(N + Delta N/2))`
/// with `Delta N = m h`. Requires `N - Delta N/2 > e`.
pub fn systematic_error_mean_exact(n: f64, h: f64, m: f64) -> Result<f64> {
    let delta_n = m * h;
    let lo = n - delta_n / 2.0;
    if lo <= std::f64::consts::E {
        return Err(Error::InvalidInput(format!(
            "window start {lo} must exceed e for the log to stay positive"
        )));
    }
    if delta_n == 0.0 {
        return Ok(0.0);
    }
    let hi = n + delta_n / 2.0;
    Ok(2.0 * h * (delta_n / (2.0 * n)).atanh() / (lo.ln() * hi.ln()))
}

/// First-order systematic error of the mean, `m h^2 / (N log^2 N)`.
pub fn systematic_error_mean_first_order(n: f64, h: f64, m: f64) -> f64 {
    let ln_n = n.ln();
    m * h * h / (n * ln_n * ln_n)
}

/// Relative systematic error of the mean, `m h / (N log N)`.
pub fn relative_systematic_error(n: f64, h: f64, m: f64) -> f64 {
    m * h / (n * n.ln())
}

/// First-order systematic error of the variance,
/// `h * Delta N * (2 log(N/h) - log N) / (log^3 N * N)`.
pub fn systematic_error_variance(n: f64, h: f64, m: f64) -> f64 {
    let delta_n = m * h;
    let ln_n = n.ln();
    h * delta_n * (2.0 * (n / h).ln() - ln_n) / (ln_n * ln_n * ln_n * n)
}

/// Exact two-term systematic error of the variance: the asymptotic variance
/// evaluated at the window ends, `v(N - Delta N/2) - v(N + Delta N/2)` with
/// `v(x) = h log(x/h) / log^2 x`. Requires `N - Delta N/2 > e`.
pub fn systematic_error_variance_exact(n: f64, h: f64, m: f64) -> Result<f64> {
    let delta_n = m * h;
    let lo = n - delta_n / 2.0;
    if lo <= std::f64::consts::E {
        return Err(Error::InvalidInput(format!(
            "window start {lo} must exceed e for the log to stay positive"
        )));
    }
    let v = |x: f64| h * (x / h).ln() / (x.ln() * x.ln());
    Ok(v(lo) - v(n + delta_n / 2.0))
}

/// Relative statistical error of the mean, `sqrt(log(N/h) / h)`.
/// Real-valued for `h <= N`.
pub fn relative_statistical_error(n: f64, h: f64) -> f64 {
    ((n / h).ln() / h).sqrt()
}

/// Delta-method standard error of `w`:
/// `w * sqrt(2/(m-1) + variance / (m * mean^2))`, treating the sample mean
/// and sample variance as independent under the normal approximation.
pub fn w_standard_error(summary: &MomentSummary, spec: &IntervalSpec) -> Result<f64> {
    if summary.mean == 0.0 {
        return Err(Error::UndefinedW(format!(
            "mean is zero for n={}, h={}",
            spec.n(),
            spec.h()
        )));
    }
    let m = spec.m() as f64;
    let rel_var = 2.0 / (m - 1.0) + summary.variance / (m * summary.mean * summary.mean);
    Ok(summary.w * rel_var.sqrt())
}

/// Bootstrap standard error of `w` (`resamples` draws with replacement,
/// seeded), as an independent cross-check of [`w_standard_error`].
///
/// Resamples whose counts are all zero are skipped; fewer than two usable
/// resamples is an error.
pub fn bootstrap_w_err(
    c: &CountVector,
    divisor: VarianceDivisor,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let counts = c.counts();
    let m = counts.len();
    if m < 2 || resamples < 2 {
        return Err(Error::InvalidInput(
            "bootstrap needs m >= 2 and at least 2 resamples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum: u64 = 0;
        let mut sum_sq: u128 = 0;
        for _ in 0..m {
            let v = u64::from(counts[rng.random_range(0..m)]);
            sum += v;
            sum_sq += u128::from(v) * u128::from(v);
        }
        if sum == 0 {
            continue;
        }
        let mf = m as f64;
        let mean = sum as f64 / mf;
        let dev_num = (m as u128 * sum_sq - u128::from(sum) * u128::from(sum)) as f64;
        let var = match divisor {
            VarianceDivisor::Sample => dev_num / (mf * (mf - 1.0)),
            VarianceDivisor::Population => dev_num / (mf * mf),
        };
        ws.push(var / mean);
    }
    if ws.len() < 2 {
        return Err(Error::UndefinedW(
            "fewer than two bootstrap resamples had nonzero counts".into(),
        ));
    }
    let k = ws.len() as f64;
    let mean_w = ws.iter().sum::<f64>() / k;
    let var_w = ws.iter().map(|w| (w - mean_w) * (w - mean_w)).sum::<f64>() / (k - 1.0);
    Ok(var_w.sqrt())
}

/// Sieves one spec and reduces it to a summary and a fit point.
pub fn run_point(
    spec: &IntervalSpec,
    base: &BasePrimes,
    cfg: &SieveConfig,
    divisor: VarianceDivisor,
) -> Result<(MomentSummary, WPoint)> {
    let counts = subinterval_counts_with(spec, base, cfg)?;
    let summary = moments(&counts, divisor)?;
    let point = WPoint {
        n: spec.n(),
        x: 1.0 / (spec.n() as f64).ln(),
        w: summary.w,
        w_err: summary.w_err,
    };
    Ok((summary, point))
}

/// Outcome of one sweep entry; failed points keep their error so callers can
/// report why a point was dropped.
#[derive(Debug)]
pub struct SweepPoint {
    pub n: u64,
    pub outcome: Result<(MomentSummary, WPoint)>,
}

/// Evaluates `(h, m)` at every `N` in `n_list`, preserving input order.
///
/// With a parallel sieve configuration the points are also evaluated
/// concurrently; the output order stays the input order either way.
pub fn sweep(
    h: u64,
    m: u64,
    n_list: &[u64],
    base: &BasePrimes,
    cfg: &SieveConfig,
    divisor: VarianceDivisor,
) -> Vec<SweepPoint> {
    let eval = |&n: &u64| SweepPoint {
        n,
        outcome: IntervalSpec::new(n, h, m)
            .and_then(|spec| run_point(&spec, base, cfg, divisor)),
    };
    #[cfg(feature = "parallel")]
    if cfg.execution == crate::sieve::Execution::Parallel {
        return n_list.par_iter().map(eval).collect();
    }
    n_list.iter().map(eval).collect()
}

/// Extracts the usable fit points from a sweep, logging dropped entries.
pub fn valid_wpoints(points: &[SweepPoint]) -> Vec<WPoint> {
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        match &p.outcome {
            Ok((_, wp)) if wp.w_err > 0.0 => out.push(*wp),
            Ok(_) => {
                log::warn!("excluding N={} from fits: w standard error is zero", p.n)
            }
            Err(e) => log::warn!("excluding N={} from fits: {e}", p.n),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::subinterval_counts;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn vector(n: u64, h: u64, counts: Vec<u32>) -> CountVector {
        let spec = IntervalSpec::new(n, h, counts.len() as u64).unwrap();
        CountVector::new(spec, counts).unwrap()
    }

    #[test]
    fn constant_counts_have_zero_variance() {
        let s = moments(&vector(1_000, 5, vec![1, 1, 1, 1]), VarianceDivisor::Sample).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.w, 0.0);
        assert_eq!(s.w_err, 0.0);
    }

    #[test]
    fn two_point_sample() {
        let s = moments(&vector(1_000, 5, vec![0, 1]), VarianceDivisor::Sample).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.variance, 0.5);
        assert_eq!(s.w, 1.0);
    }

    #[test]
    fn all_zero_counts_are_an_explicit_error() {
        match moments(&vector(1_000, 5, vec![0, 0, 0]), VarianceDivisor::Sample) {
            Err(Error::UndefinedW(_)) => {}
            other => panic!("expected UndefinedW, got {other:?}"),
        }
    }

    #[test]
    fn moments_are_permutation_invariant() {
        let a = vector(10_000, 7, vec![3, 0, 1, 4, 2, 2, 0, 5]);
        let b = vector(10_000, 7, vec![5, 2, 0, 4, 3, 0, 2, 1]);
        let sa = moments(&a, VarianceDivisor::Sample).unwrap();
        let sb = moments(&b, VarianceDivisor::Sample).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn h1_population_identity_is_bit_exact() {
        // Sieved 0/1 counts around 10^6.
        let spec = IntervalSpec::new(1_000_000, 1, 10_000).unwrap();
        let counts = subinterval_counts(&spec);
        let s = moments(&counts, VarianceDivisor::Population).unwrap();
        assert_eq!(s.second_moment, s.mean);
        assert_eq!(s.w, 1.0 - s.mean);
    }

    #[test]
    fn h1_sample_divisor_identity_up_to_convention() {
        let spec = IntervalSpec::new(1_000_000, 1, 10_000).unwrap();
        let counts = subinterval_counts(&spec);
        let s = moments(&counts, VarianceDivisor::Sample).unwrap();
        let m = 10_000.0;
        assert_relative_eq!(
            s.w,
            (m / (m - 1.0)) * (1.0 - s.mean),
            max_relative = 1e-12
        );
    }

    #[test]
    fn systematic_mean_error_exact_vs_first_order() {
        let (n, h, m) = (1e10, 1e3, 1e5);
        let exact = systematic_error_mean_exact(n, h, m).unwrap();
        let first = systematic_error_mean_first_order(n, h, m);
        assert!(exact > 0.0);
        assert_relative_eq!(exact, first, max_relative = 0.01);
        assert_relative_eq!(first, 0.018_86, max_relative = 1e-3);
        // Degenerate width.
        assert_eq!(systematic_error_mean_exact(1e10, 1e3, 0.0).unwrap(), 0.0);
        assert_eq!(systematic_error_mean_first_order(1e10, 1e3, 0.0), 0.0);
        // h doubles -> first-order error quadruples.
        let f2 = systematic_error_mean_first_order(n, 2.0 * h, m);
        assert_relative_eq!(f2, 4.0 * first, max_relative = 1e-12);
    }

    #[test]
    fn exact_to_first_order_gap_shrinks_with_n() {
        let gap = |n: f64| {
            let e = systematic_error_mean_exact(n, 1e3, 1e5).unwrap();
            let f = systematic_error_mean_first_order(n, 1e3, 1e5);
            ((e - f) / e).abs()
        };
        let (g8, g10, g12) = (gap(1e8), gap(1e10), gap(1e12));
        assert!(g8 > g10 && g10 > g12);
    }

    #[test]
    fn relative_errors_at_reference_point() {
        let eps_sys = relative_systematic_error(1e10, 1e3, 1e5);
        assert_relative_eq!(eps_sys, 4.34e-4, max_relative = 1e-2);
        assert_eq!(relative_systematic_error(1e10, 0.0, 1e5), 0.0);
        assert_relative_eq!(
            relative_systematic_error(1e10, 1e3, 2e5),
            2.0 * eps_sys,
            max_relative = 1e-12
        );

        let eps_stat = relative_statistical_error(1e10, 1e3);
        assert_relative_eq!(eps_stat, 0.127, max_relative = 1e-2);
        // log(N/h) = 1 edge.
        let n = 1e6;
        let h = n / std::f64::consts::E;
        assert_relative_eq!(
            relative_statistical_error(n, h),
            (1.0 / h).sqrt(),
            max_relative = 1e-12
        );
        assert!(relative_statistical_error(1e10, 2e3) < eps_stat);
    }

    #[test]
    fn variance_systematic_error_forms_agree() {
        let (n, h, m) = (1e10, 1e3, 1e5);
        let first = systematic_error_variance(n, h, m);
        let exact = systematic_error_variance_exact(n, h, m).unwrap();
        assert!(first > 0.0, "positive whenever N > h^2");
        assert_relative_eq!(exact, first, max_relative = 0.02);
        assert_eq!(systematic_error_variance(n, h, 0.0), 0.0);
    }

    #[test]
    fn w_error_scales_inversely_with_sqrt_m() {
        let summary = MomentSummary {
            mean: 120.0,
            second_moment: 0.0,
            variance: 67.0,
            w: 67.0 / 120.0,
            stat_rel_err: 0.0,
            sys_rel_err: 0.0,
            sys_abs_err_mean: 0.0,
            sys_abs_err_variance: 0.0,
            w_err: 0.0,
        };
        let err_at = |m: u64| {
            let spec = IntervalSpec::new(1 << 40, 2500, m).unwrap();
            w_standard_error(&summary, &spec).unwrap()
        };
        let ratio = err_at(1_000) / err_at(100_000);
        assert_relative_eq!(ratio, 10.0, max_relative = 1e-2);
    }

    #[test]
    fn w_error_reference_value() {
        let summary = MomentSummary {
            mean: 120.655,
            second_moment: 0.0,
            variance: 67.380,
            w: 67.380 / 120.655,
            stat_rel_err: 0.0,
            sys_rel_err: 0.0,
            sys_abs_err_mean: 0.0,
            sys_abs_err_variance: 0.0,
            w_err: 0.0,
        };
        let spec = IntervalSpec::new(1_000_000_000, 2500, 100_000).unwrap();
        let err = w_standard_error(&summary, &spec).unwrap();
        assert_relative_eq!(err, 2.5e-3, max_relative = 2e-2);
    }

    #[test]
    fn bootstrap_is_seeded_and_comparable_to_delta_method() {
        let spec = IntervalSpec::new(2_000_000, 100, 2_000).unwrap();
        let counts = subinterval_counts(&spec);
        let a = bootstrap_w_err(&counts, VarianceDivisor::Sample, 300, 42).unwrap();
        let b = bootstrap_w_err(&counts, VarianceDivisor::Sample, 300, 42).unwrap();
        assert_eq!(a, b);
        let delta = moments(&counts, VarianceDivisor::Sample).unwrap().w_err;
        assert!(a > 0.3 * delta && a < 3.0 * delta, "bootstrap {a} vs delta {delta}");
    }

    #[test]
    fn sweep_preserves_order_and_flags_bad_points() {
        let base = BasePrimes::up_to(2_000).unwrap();
        let cfg = SieveConfig::default();
        // Second entry is invalid: the window would start below 2.
        let points = sweep(
            100,
            10,
            &[1_000_000, 400, 2_000_000],
            &base,
            &cfg,
            VarianceDivisor::Sample,
        );
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].n, 1_000_000);
        assert!(points[1].outcome.is_err());
        let usable = valid_wpoints(&points);
        assert_eq!(usable.len(), 2);
        assert_eq!(usable[0].n, 1_000_000);
        assert_eq!(usable[1].n, 2_000_000);
        assert_abs_diff_eq!(
            usable[0].x,
            1.0 / (1e6f64).ln(),
            epsilon = 1e-18
        );
    }
}
