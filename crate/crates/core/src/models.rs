//! Closed-form predictions for prime counts in short intervals.
//!
//! Natural logarithms throughout. The corrected variance carries the
//! finite-size constant `B` with a configurable sign; the default subtracts
//! it, which is the orientation the measured variances force (empirical
//! variance sits below the asymptote and the fitted `b(h, m)` exceeds
//! `log h`).

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Asymptotic mean number of primes per subinterval, `h / log n`.
pub fn asymptotic_mean(n: f64, h: f64) -> f64 {
    h / n.ln()
}

/// Asymptotic variance `(h / log^2 n) * log(n / h)`.
pub fn asymptotic_variance(n: f64, h: f64) -> f64 {
    let ln_n = n.ln();
    h / (ln_n * ln_n) * (n / h).ln()
}

/// Linear model for the normalized variance, `w = 1 - b / log n`.
pub fn w_linear(n: f64, b: f64) -> f64 {
    1.0 - b / n.ln()
}

/// Normalized variance with `b` split into `C + alpha * log h`:
/// `w = 1 - (c + alpha * log h) / log n`.
pub fn w_alpha(n: f64, h: f64, c: f64, alpha: f64) -> f64 {
    1.0 - (c + alpha * h.ln()) / n.ln()
}

/// Sign applied to the finite-size constant in the corrected variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BSign {
    /// `variance = (h / log^2 n) * (log(n/h) - B)` — matches the data.
    #[default]
    Minus,
    /// `variance = (h / log^2 n) * (log(n/h) + B)`.
    Plus,
}

impl BSign {
    fn apply(self, b: f64) -> f64 {
        match self {
            BSign::Minus => -b,
            BSign::Plus => b,
        }
    }
}

/// Corrected normalized variance `w = 1 - (log h +/- B) / log n`.
pub fn corrected_w(n: f64, h: f64, b: f64, sign: BSign) -> f64 {
    1.0 - (h.ln() - sign.apply(b)) / n.ln()
}

/// Corrected variance `(h / log^2 n) * (log(n/h) +/- B)`.
///
/// Computed independently of [`corrected_w`]; the identity
/// `corrected_w * asymptotic_mean = corrected_variance` holds to rounding.
pub fn corrected_variance(n: f64, h: f64, b: f64, sign: BSign) -> f64 {
    let ln_n = n.ln();
    h / (ln_n * ln_n) * ((n / h).ln() + sign.apply(b))
}

/// The constant `gamma + log(2 pi) - 1 = 1.41509273...` that the fitted `B`
/// lands on.
pub fn ms_constant() -> f64 {
    EULER_GAMMA + (2.0 * std::f64::consts::PI).ln() - 1.0
}

/// Poisson probability `lambda^k e^{-lambda} / k!`, evaluated in log space.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp()
}

/// The three one- and two-parameter forms of the correction factor
/// `alpha(h)`, all tending to 1 as `h` grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaParametrization {
    /// `alpha(h) = (alpha1 + log h) / log h`, `B = 1 + alpha1`.
    I { alpha1: f64 },
    /// `alpha(h) = log h / (alpha2 + log h)`, `B = 1 - alpha2`.
    II { alpha2: f64 },
    /// `alpha(h) = (alpha1 + log h) / (alpha2 + log h)`, `B = 1 + alpha1 - alpha2`.
    /// Monotone decrease toward 1 requires `alpha1 > alpha2`.
    III { alpha1: f64, alpha2: f64 },
}

/// Discriminant for [`AlphaParametrization`], used where only the form
/// matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaKind {
    I,
    II,
    III,
}

impl AlphaKind {
    /// Number of free parameters of the form.
    pub fn n_params(self) -> usize {
        match self {
            AlphaKind::I | AlphaKind::II => 1,
            AlphaKind::III => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AlphaKind::I => "I",
            AlphaKind::II => "II",
            AlphaKind::III => "III",
        }
    }
}

impl std::fmt::Display for AlphaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl AlphaParametrization {
    pub fn kind(&self) -> AlphaKind {
        match self {
            AlphaParametrization::I { .. } => AlphaKind::I,
            AlphaParametrization::II { .. } => AlphaKind::II,
            AlphaParametrization::III { .. } => AlphaKind::III,
        }
    }

    /// Evaluates `alpha(h)`.
    ///
    /// Kinds I and II need `h >= 2` so that `log h > 0`; kind III needs
    /// `h > 0` and `alpha2 != -log h`.
    pub fn eval(&self, h: f64) -> Result<f64> {
        match *self {
            AlphaParametrization::I { alpha1 } => {
                let f = pos_log_h(h)?;
                Ok((alpha1 + f) / f)
            }
            AlphaParametrization::II { alpha2 } => {
                let f = pos_log_h(h)?;
                let den = alpha2 + f;
                if den == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "alpha2 = -log h pole at h = {h}"
                    )));
                }
                Ok(f / den)
            }
            AlphaParametrization::III { alpha1, alpha2 } => {
                if h <= 0.0 {
                    return Err(Error::InvalidInput(format!("h = {h} must be positive")));
                }
                let f = h.ln();
                let den = alpha2 + f;
                if den == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "alpha2 = -log h pole at h = {h}"
                    )));
                }
                Ok((alpha1 + f) / den)
            }
        }
    }

    /// The finite-size constant implied by the fitted parameters.
    pub fn extract_b(&self) -> f64 {
        match *self {
            AlphaParametrization::I { alpha1 } => 1.0 + alpha1,
            AlphaParametrization::II { alpha2 } => 1.0 - alpha2,
            AlphaParametrization::III { alpha1, alpha2 } => 1.0 + alpha1 - alpha2,
        }
    }
}

fn pos_log_h(h: f64) -> Result<f64> {
    if h < 2.0 {
        return Err(Error::InvalidInput(format!(
            "h = {h} below 2: log h must be positive"
        )));
    }
    Ok(h.ln())
}

/// Interval regime relative to `log N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Microscopic,
    Mesoscopic,
    Macroscopic,
}

/// Classification of an `(N, h)` pair together with the ratio `h / log N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleClass {
    pub scale: Scale,
    /// `h / log N`.
    pub ratio: f64,
}

/// Thresholds for [`classify_scale`]. The asymptotic definitions
/// (`h / log N -> infinity`, `h >>> N`) need finite cutoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleThresholds {
    /// Mesoscopic once `h / log N` reaches this value.
    pub mesoscopic_ratio: f64,
    /// Macroscopic once `h / N` reaches this value.
    pub macroscopic_h_over_n: f64,
}

impl Default for ScaleThresholds {
    fn default() -> Self {
        ScaleThresholds {
            mesoscopic_ratio: 10.0,
            macroscopic_h_over_n: 1.0,
        }
    }
}

/// Classifies `(n, h)` with explicit thresholds.
pub fn classify_scale_with(n: f64, h: f64, t: &ScaleThresholds) -> ScaleClass {
    let ratio = h / n.ln();
    let scale = if h / n >= t.macroscopic_h_over_n {
        Scale::Macroscopic
    } else if ratio >= t.mesoscopic_ratio {
        Scale::Mesoscopic
    } else {
        Scale::Microscopic
    };
    ScaleClass { scale, ratio }
}

/// Classifies `(n, h)` with the default thresholds.
pub fn classify_scale(n: f64, h: f64) -> ScaleClass {
    classify_scale_with(n, h, &ScaleThresholds::default())
}
