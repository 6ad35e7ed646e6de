//! Weighted least-squares extraction of `b(h, m)` and the `alpha(h)`
//! parametrizations, with Pearson chi-squared goodness of fit.
//!
//! The `w` fit keeps the intercept pinned at 1 (the Poisson limit), which
//! collapses it to a one-parameter closed form. Parametrization kinds I and
//! II are weighted linear problems in `1/log h` (kind II after mapping the
//! data through `y = 1/alpha`); kind III runs a damped Gauss–Newton on
//! `(alpha1, alpha2)`. Parameter errors come from the inverse
//! normal-equations matrix, without reduced-chi-squared inflation unless
//! explicitly requested.

use crate::error::{Error, Result};
use crate::experiment::WPoint;
use crate::models::{AlphaKind, AlphaParametrization};
use crate::special::gamma_q;

/// One named fit parameter with its 1-sigma error.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParam {
    pub name: &'static str,
    pub value: f64,
    pub error: f64,
}

/// Diagnostics raised by a fit without invalidating it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitFlags {
    /// The optimum violates `alpha1 > alpha2` (kind III only).
    pub constraint_violated: bool,
    /// The normal-equations matrix is near-singular; parameter directions
    /// are not independently determined.
    pub degenerate: bool,
}

/// Outcome of a weighted least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub chi2: f64,
    pub ndof: usize,
    pub chi2_reduced: f64,
    pub p_value: f64,
    pub n_points: usize,
    pub flags: FitFlags,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Pearson statistic `sum ((value_i - model_i) / error_i)^2`.
pub fn chi2_statistic(data: &[(f64, f64)], model: &[f64]) -> f64 {
    debug_assert_eq!(data.len(), model.len());
    data.iter()
        .zip(model)
        .map(|(&(value, error), &m)| {
            let r = (value - m) / error;
            r * r
        })
        .sum()
}

/// Upper-tail probability of the chi-squared distribution,
/// `Q(ndof/2, chi2/2)`.
pub fn p_value(chi2: f64, ndof: usize) -> Result<f64> {
    if !(chi2 >= 0.0) {
        return Err(Error::InvalidInput(format!("chi2 = {chi2} must be >= 0")));
    }
    if ndof == 0 {
        return Err(Error::InvalidInput("ndof must be >= 1".into()));
    }
    Ok(gamma_q(ndof as f64 / 2.0, chi2 / 2.0))
}

fn check_fit_inputs(n: usize, errors: impl Iterator<Item = f64>, min_points: usize) -> Result<()> {
    if n < min_points {
        return Err(Error::InvalidInput(format!(
            "fit needs at least {min_points} points, got {n}"
        )));
    }
    for (i, e) in errors.enumerate() {
        if !(e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "point {i} has non-positive error {e}"
            )));
        }
    }
    Ok(())
}

/// Weighted fit of `w = 1 - b x` with the intercept fixed at 1
/// (`x = 1 / log N`).
///
/// Closed form: `b = sum(x_i (1 - w_i) / s_i^2) / sum(x_i^2 / s_i^2)`,
/// `sigma_b = sum(x_i^2 / s_i^2)^{-1/2}`.
pub fn fit_b(points: &[WPoint]) -> Result<FitResult> {
    check_fit_inputs(points.len(), points.iter().map(|p| p.w_err), 2)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in points {
        let inv_var = 1.0 / (p.w_err * p.w_err);
        num += p.x * (1.0 - p.w) * inv_var;
        den += p.x * p.x * inv_var;
    }
    let b = num / den;
    let b_err = 1.0 / den.sqrt();

    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.w, p.w_err)).collect();
    let model: Vec<f64> = points.iter().map(|p| 1.0 - b * p.x).collect();
    let chi2 = chi2_statistic(&data, &model);
    let ndof = points.len() - 1;
    Ok(FitResult {
        params: vec![FitParam { name: "b", value: b, error: b_err }],
        chi2,
        ndof,
        chi2_reduced: chi2 / ndof as f64,
        p_value: p_value(chi2, ndof)?,
        n_points: points.len(),
        flags: FitFlags::default(),
    })
}

/// Diagnostic two-parameter fit `w = a - b x` with a free intercept.
/// Not used for headline numbers; exposes how far the data pulls the
/// intercept away from the Poisson limit of 1.
pub fn fit_b_free_intercept(points: &[WPoint]) -> Result<FitResult> {
    check_fit_inputs(points.len(), points.iter().map(|p| p.w_err), 3)?;
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let inv_var = 1.0 / (p.w_err * p.w_err);
        s += inv_var;
        sx += p.x * inv_var;
        sy += p.w * inv_var;
        sxx += p.x * p.x * inv_var;
        sxy += p.x * p.w * inv_var;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return Err(Error::FitFailure("singular normal equations".into()));
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (s * sxy - sx * sy) / det;
    let b = -slope;

    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.w, p.w_err)).collect();
    let model: Vec<f64> = points.iter().map(|p| intercept - b * p.x).collect();
    let chi2 = chi2_statistic(&data, &model);
    let ndof = points.len() - 2;
    Ok(FitResult {
        params: vec![
            FitParam { name: "intercept", value: intercept, error: (sxx / det).sqrt() },
            FitParam { name: "b", value: b, error: (s / det).sqrt() },
        ],
        chi2,
        ndof,
        chi2_reduced: chi2 / ndof as f64,
        p_value: p_value(chi2, ndof)?,
        n_points: points.len(),
        flags: FitFlags::default(),
    })
}

/// One `alpha(h)` measurement derived from a `b(h, m)` fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPoint {
    pub h: u64,
    pub alpha: f64,
    pub alpha_err: f64,
}

/// Inverts `b = C + alpha log h` at fixed `C`:
/// `alpha = (b - C) / log h`, `alpha_err = sigma_b / log h`.
///
/// `C` is treated as exact; the `h = 1` sweeps pin it to 1 before any
/// alpha is derived.
pub fn derive_alpha(b_fit: &FitResult, c: f64, h: u64) -> Result<AlphaPoint> {
    if h < 2 {
        return Err(Error::InvalidInput(format!(
            "alpha is defined for h >= 2, got h={h}"
        )));
    }
    let b = b_fit
        .param("b")
        .ok_or_else(|| Error::InvalidInput("fit result has no parameter 'b'".into()))?;
    let log_h = (h as f64).ln();
    Ok(AlphaPoint {
        h,
        alpha: (b.value - c) / log_h,
        alpha_err: b.error / log_h,
    })
}

/// Options for [`fit_alpha_with_options`].
#[derive(Debug, Clone, Copy)]
pub struct AlphaFitOptions {
    /// Points with `h < h_min` are excluded; small-`h` alphas oscillate and
    /// sit outside the mesoscopic regime.
    pub h_min: u64,
    /// Scale parameter errors by `sqrt(chi2_reduced)`.
    pub inflate_errors: bool,
    /// Initial guess for the kind III Gauss–Newton iteration.
    pub start: (f64, f64),
}

impl Default for AlphaFitOptions {
    fn default() -> Self {
        AlphaFitOptions {
            h_min: 200,
            inflate_errors: false,
            start: (0.0, 0.0),
        }
    }
}

/// An `alpha(h)` parametrization fit together with the implied finite-size
/// constant `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFitResult {
    pub parametrization: AlphaParametrization,
    pub b: f64,
    pub b_err: f64,
    pub fit: FitResult,
}

impl AlphaFitResult {
    pub fn kind(&self) -> AlphaKind {
        self.parametrization.kind()
    }
}

/// Fits one parametrization kind to `alpha(h)` points with the default
/// options and the given `h_min` cut.
pub fn fit_alpha(kind: AlphaKind, points: &[AlphaPoint], h_min: u64) -> Result<AlphaFitResult> {
    fit_alpha_with_options(
        kind,
        points,
        &AlphaFitOptions { h_min, ..AlphaFitOptions::default() },
    )
}

/// Fits one parametrization kind to `alpha(h)` points.
///
/// Kinds I and II are solved in closed form as weighted linear problems in
/// `u = 1/log h` (kind II on the reciprocal data `y = 1/alpha`, with
/// delta-method weights); kind III by damped Gauss–Newton. The quoted chi2
/// is always evaluated in alpha space.
pub fn fit_alpha_with_options(
    kind: AlphaKind,
    points: &[AlphaPoint],
    opts: &AlphaFitOptions,
) -> Result<AlphaFitResult> {
    let used: Vec<AlphaPoint> = points.iter().copied().filter(|p| p.h >= opts.h_min).collect();
    let n_params = kind.n_params();
    if used.len() < n_params + 1 {
        return Err(Error::InvalidInput(format!(
            "kind {kind} needs at least {} points with h >= {}, got {}",
            n_params + 1,
            opts.h_min,
            used.len()
        )));
    }
    check_fit_inputs(used.len(), used.iter().map(|p| p.alpha_err), n_params + 1)?;
    if used.iter().any(|p| p.h < 2) {
        return Err(Error::InvalidInput("alpha points need h >= 2".into()));
    }

    let (parametrization, errors, covariance, mut flags) = match kind {
        AlphaKind::I => {
            // alpha = 1 + alpha1 * u.
            let (value, error) = linear_through_one(
                used.iter().map(|p| (1.0 / (p.h as f64).ln(), p.alpha, p.alpha_err)),
            )?;
            (
                AlphaParametrization::I { alpha1: value },
                vec![error],
                None,
                FitFlags::default(),
            )
        }
        AlphaKind::II => {
            // 1/alpha = 1 + alpha2 * u, with sigma_y = sigma_alpha / alpha^2.
            if let Some(p) = used.iter().find(|p| p.alpha <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "kind II needs positive alpha values, got {} at h={}",
                    p.alpha, p.h
                )));
            }
            let (value, error) = linear_through_one(used.iter().map(|p| {
                (
                    1.0 / (p.h as f64).ln(),
                    1.0 / p.alpha,
                    p.alpha_err / (p.alpha * p.alpha),
                )
            }))?;
            (
                AlphaParametrization::II { alpha2: value },
                vec![error],
                None,
                FitFlags::default(),
            )
        }
        AlphaKind::III => gauss_newton_kind3(&used, opts.start)?,
    };

    // Goodness of fit in alpha space for every kind.
    let data: Vec<(f64, f64)> = used.iter().map(|p| (p.alpha, p.alpha_err)).collect();
    let model: Vec<f64> = used
        .iter()
        .map(|p| parametrization.eval(p.h as f64))
        .collect::<Result<_>>()?;
    let chi2 = chi2_statistic(&data, &model);
    let ndof = used.len() - n_params;
    let chi2_reduced = chi2 / ndof as f64;

    let scale = if opts.inflate_errors { chi2_reduced.sqrt() } else { 1.0 };
    let b = parametrization.extract_b();
    let b_err_raw = match covariance {
        // One-parameter kinds: |dB/dparam| = 1 either way.
        None => errors[0],
        // Kind III: B = 1 + alpha1 - alpha2, gradient (1, -1).
        Some(cov) => (cov[0] + cov[2] - 2.0 * cov[1]).max(0.0).sqrt(),
    };

    if let AlphaParametrization::III { alpha1, alpha2 } = parametrization {
        flags.constraint_violated = alpha1 <= alpha2;
    }

    let params = match parametrization {
        AlphaParametrization::I { alpha1 } => vec![FitParam {
            name: "alpha1",
            value: alpha1,
            error: errors[0] * scale,
        }],
        AlphaParametrization::II { alpha2 } => vec![FitParam {
            name: "alpha2",
            value: alpha2,
            error: errors[0] * scale,
        }],
        AlphaParametrization::III { alpha1, alpha2 } => vec![
            FitParam { name: "alpha1", value: alpha1, error: errors[0] * scale },
            FitParam { name: "alpha2", value: alpha2, error: errors[1] * scale },
        ],
    };

    Ok(AlphaFitResult {
        parametrization,
        b,
        b_err: b_err_raw * scale,
        fit: FitResult {
            params,
            chi2,
            ndof,
            chi2_reduced,
            p_value: p_value(chi2, ndof)?,
            n_points: used.len(),
            flags,
        },
    })
}

/// Weighted fit of `y = 1 + theta * u` over `(u, y, sigma)` triples.
fn linear_through_one(data: impl Iterator<Item = (f64, f64, f64)>) -> Result<(f64, f64)> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, y, sigma) in data {
        let inv_var = 1.0 / (sigma * sigma);
        num += u * (y - 1.0) * inv_var;
        den += u * u * inv_var;
    }
    if den <= 0.0 {
        return Err(Error::FitFailure("singular normal equations".into()));
    }
    Ok((num / den, 1.0 / den.sqrt()))
}

type Kind3Fit = (AlphaParametrization, Vec<f64>, Option<[f64; 3]>, FitFlags);

/// Damped Gauss–Newton for `alpha(h) = (alpha1 + log h) / (alpha2 + log h)`.
///
/// A Marquardt-damped phase (damping x10 on any chi2 increase, /10 on
/// success) globalizes the iteration; once its steps fall below 1e-9
/// relative, a short undamped Newton polish solves the stationarity
/// condition to machine precision. The polish is what makes the optimum
/// independent of the initial guess: near the minimum, chi2 comparisons
/// saturate in f64 long before the gradient does.
fn gauss_newton_kind3(points: &[AlphaPoint], start: (f64, f64)) -> Result<Kind3Fit> {
    const MAX_ITER: usize = 200;
    const STEP_TOL: f64 = 1e-12;
    const COARSE_TOL: f64 = 1e-9;
    const LAMBDA_MAX: f64 = 1e14;

    let logs: Vec<f64> = points.iter().map(|p| (p.h as f64).ln()).collect();
    let chi2_at = |a1: f64, a2: f64| -> f64 {
        let mut total = 0.0;
        for (p, &log_h) in points.iter().zip(&logs) {
            let den = a2 + log_h;
            if den <= 1e-9 {
                return f64::INFINITY;
            }
            let r = (p.alpha - (a1 + log_h) / den) / p.alpha_err;
            total += r * r;
        }
        total
    };
    // Normal equations (JtJ, Jt r) with the 1/sigma weights folded in.
    let normal_eqs = |a1: f64, a2: f64| -> ([f64; 3], [f64; 2]) {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, &log_h) in points.iter().zip(&logs) {
            let den = a2 + log_h;
            let j1 = 1.0 / (den * p.alpha_err);
            let j2 = -(a1 + log_h) / (den * den * p.alpha_err);
            let r = (p.alpha - (a1 + log_h) / den) / p.alpha_err;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        ([a11, a12, a22], [g1, g2])
    };

    let (mut a1, mut a2) = start;
    let mut chi2 = chi2_at(a1, a2);
    if !chi2.is_finite() {
        return Err(Error::FitFailure(format!(
            "initial guess ({a1}, {a2}) sits on the alpha2 = -log h pole"
        )));
    }
    let mut lambda = 1e-3;
    let mut near_optimum = false;

    for iter in 0..MAX_ITER {
        let ([a11, a12, a22], [g1, g2]) = normal_eqs(a1, a2);
        let grad_norm = (g1 * g1 + g2 * g2).sqrt();

        // Marquardt step: scale the diagonal by (1 + lambda).
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let d11 = a11 * (1.0 + lambda);
            let d22 = a22 * (1.0 + lambda);
            let det = d11 * d22 - a12 * a12;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step1 = (d22 * g1 - a12 * g2) / det;
            let step2 = (d11 * g2 - a12 * g1) / det;
            let trial = chi2_at(a1 + step1, a2 + step2);
            if trial <= chi2 {
                a1 += step1;
                a2 += step2;
                chi2 = trial;
                lambda = (lambda / 10.0).max(1e-14);
                let step = (step1 * step1 + step2 * step2).sqrt();
                let scale = 1.0 + (a1 * a1 + a2 * a2).sqrt();
                if step <= COARSE_TOL * scale {
                    near_optimum = true;
                }
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // chi2 cannot be reduced any further in f64; hand over to the
            // polish if the gradient is already small, else report the stall.
            if grad_norm <= 1e-6 * (1.0 + chi2) {
                near_optimum = true;
            } else {
                return Err(Error::FitFailure(format!(
                    "Gauss-Newton stalled after {iter} iterations: chi2={chi2:.6e}, \
                     |grad|={grad_norm:.3e}, lambda={lambda:.3e}"
                )));
            }
        }
        if near_optimum {
            break;
        }
    }
    if !near_optimum {
        return Err(Error::FitFailure(format!(
            "Gauss-Newton did not converge within {MAX_ITER} iterations (chi2={chi2:.6e})"
        )));
    }

    // Newton polish on the stationarity condition. Steps are accepted
    // unconditionally while they stay tiny; the last one must drop below
    // the step tolerance.
    let mut converged = false;
    for _ in 0..20 {
        let ([a11, a12, a22], [g1, g2]) = normal_eqs(a1, a2);
        let det = a11 * a22 - a12 * a12;
        if !(det > f64::MIN_POSITIVE) || !det.is_finite() {
            // Singular normal matrix (collinear data): the damped phase's
            // point is as determined as the problem allows.
            let grad_norm = (g1 * g1 + g2 * g2).sqrt();
            converged = grad_norm <= 1e-9 * (1.0 + chi2);
            break;
        }
        let step1 = (a22 * g1 - a12 * g2) / det;
        let step2 = (a11 * g2 - a12 * g1) / det;
        let step = (step1 * step1 + step2 * step2).sqrt();
        let scale = 1.0 + (a1 * a1 + a2 * a2).sqrt();
        if step > 1e-3 * scale {
            // The quadratic model is not trustworthy here; keep the damped
            // phase's point.
            break;
        }
        a1 += step1;
        a2 += step2;
        if step <= STEP_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailure(format!(
            "Newton polish did not reach the stationary point (chi2={chi2:.6e})"
        )));
    }

    // Covariance from the undamped normal matrix at the optimum.
    let ([a11, a12, a22], _) = normal_eqs(a1, a2);
    let det = a11 * a22 - a12 * a12;
    let mut flags = FitFlags::default();
    // Condition estimate of the 2x2 normal matrix via its eigenvalues.
    let tr = a11 + a22;
    let disc = ((a11 - a22) * (a11 - a22) + 4.0 * a12 * a12).sqrt();
    let eig_min = (tr - disc) / 2.0;
    let eig_max = (tr + disc) / 2.0;
    if !(eig_min > 0.0) || eig_max / eig_min > 1e12 {
        flags.degenerate = true;
    }
    if det <= 0.0 || !det.is_finite() {
        return Ok((
            AlphaParametrization::III { alpha1: a1, alpha2: a2 },
            vec![f64::INFINITY, f64::INFINITY],
            Some([f64::INFINITY, 0.0, f64::INFINITY]),
            FitFlags { degenerate: true, ..flags },
        ));
    }
    let cov = [a22 / det, -a12 / det, a11 / det];
    Ok((
        AlphaParametrization::III { alpha1: a1, alpha2: a2 },
        vec![cov[0].sqrt(), cov[2].sqrt()],
        Some(cov),
        flags,
    ))
}

/// Orders parametrization fits by p-value, best first; returns indices into
/// the input slice. Ties keep the input order.
pub fn compare_parametrizations(results: &[AlphaFitResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        results[b]
            .fit
            .p_value
            .partial_cmp(&results[a].fit.p_value)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}
