//! Pipeline configuration: a single TOML file with hard errors on unknown
//! keys, plus the config hash that stamps every emitted CSV.
//!
//! The hash covers only the scientific sections (`grid`, `experiment`,
//! `fit`, `model`); execution parameters (`run`: threads, paths) are
//! excluded so the same science produces byte-identical outputs at any
//! worker count.

use crate::{CliError, CliResult};
use primespan_core::experiment::VarianceDivisor;
use primespan_core::models::{AlphaKind, BSign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// N-grid: either an explicit list or a log-spaced generator.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_min: Option<u64>,
    pub n_max: Option<u64>,
    pub points: Option<u32>,
    pub n_list: Option<Vec<u64>>,
}

/// Desk-scale default grid: 13 log-spaced centres in [1e9, 1e11].
pub const DEFAULT_N_MIN: u64 = 1_000_000_000;
pub const DEFAULT_N_MAX: u64 = 100_000_000_000;
pub const DEFAULT_GRID_POINTS: u32 = 13;

/// `points` integers log-spaced over `[n_min, n_max]`, endpoints included.
pub fn log_spaced_grid(n_min: u64, n_max: u64, points: u32) -> CliResult<Vec<u64>> {
    if points < 2 || n_min < 3 || n_min >= n_max {
        return Err(CliError::Input(format!(
            "grid needs n_min >= 3, n_min < n_max and points >= 2 \
             (got n_min={n_min}, n_max={n_max}, points={points})"
        )));
    }
    let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
    let grid: Vec<u64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            (lo + t * (hi - lo)).exp().round() as u64
        })
        .collect();
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &[u64]) -> CliResult<()> {
    if grid.len() < 2 {
        return Err(CliError::Input("N-grid needs at least 2 points".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Input("N-grid must be strictly increasing".into()));
    }
    Ok(())
}

impl GridConfig {
    /// Resolves to a strictly increasing list of centres.
    pub fn resolve(&self) -> CliResult<Vec<u64>> {
        if let Some(list) = &self.n_list {
            if self.n_min.is_some() || self.n_max.is_some() || self.points.is_some() {
                return Err(CliError::Input(
                    "grid: give either n_list or n_min/n_max/points, not both".into(),
                ));
            }
            validate_grid(list)?;
            return Ok(list.clone());
        }
        log_spaced_grid(
            self.n_min.unwrap_or(DEFAULT_N_MIN),
            self.n_max.unwrap_or(DEFAULT_N_MAX),
            self.points.unwrap_or(DEFAULT_GRID_POINTS),
        )
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subinterval lengths to sweep; h = 1 entries feed the C estimate and
    /// are excluded from alpha fits.
    pub h_values: Vec<u64>,
    /// Subinterval counts; one full sweep + fit chain per m.
    pub m_values: Vec<u64>,
    /// Population (m) instead of sample (m-1) variance divisor.
    #[serde(default)]
    pub population_divisor: bool,
}

impl ExperimentConfig {
    pub fn divisor(&self) -> VarianceDivisor {
        if self.population_divisor {
            VarianceDivisor::Population
        } else {
            VarianceDivisor::Sample
        }
    }
}

fn default_h_min() -> u64 {
    200
}

fn default_kinds() -> Vec<String> {
    vec!["I".into(), "II".into(), "III".into()]
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Alpha points below this h are excluded from parametrization fits.
    #[serde(default = "default_h_min")]
    pub h_min: u64,
    /// Parametrization kinds to fit ("I", "II", "III").
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    /// Scale parameter errors by sqrt(reduced chi2).
    #[serde(default)]
    pub inflate_errors: bool,
    /// Also run the free-intercept diagnostic fit of w.
    #[serde(default)]
    pub free_intercept_diagnostic: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            h_min: default_h_min(),
            kinds: default_kinds(),
            inflate_errors: false,
            free_intercept_diagnostic: false,
        }
    }
}

impl FitConfig {
    pub fn parse_kinds(&self) -> CliResult<Vec<AlphaKind>> {
        self.kinds.iter().map(|k| parse_kind(k)).collect()
    }
}

pub fn parse_kind(label: &str) -> CliResult<AlphaKind> {
    match label {
        "I" | "i" | "1" => Ok(AlphaKind::I),
        "II" | "ii" | "2" => Ok(AlphaKind::II),
        "III" | "iii" | "3" => Ok(AlphaKind::III),
        other => Err(CliError::Input(format!(
            "unknown parametrization kind {other:?} (expected I, II or III)"
        ))),
    }
}

fn default_meso_ratio() -> f64 {
    10.0
}

fn default_sign() -> String {
    "minus".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Sign of the finite-size constant in the corrected variance.
    #[serde(default = "default_sign")]
    pub b_sign: String,
    /// h / log N threshold for the mesoscopic label.
    #[serde(default = "default_meso_ratio")]
    pub mesoscopic_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            b_sign: default_sign(),
            mesoscopic_ratio: default_meso_ratio(),
        }
    }
}

impl ModelConfig {
    pub fn sign(&self) -> CliResult<BSign> {
        match self.b_sign.as_str() {
            "minus" => Ok(BSign::Minus),
            "plus" => Ok(BSign::Plus),
            other => Err(CliError::Input(format!(
                "model.b_sign must be \"minus\" or \"plus\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; 0 = all cores.
    #[serde(default)]
    pub threads: usize,
    /// Count-vector cache directory; empty disables caching.
    #[serde(default)]
    pub cache_dir: String,
    /// Output directory for CSVs and the report.
    #[serde(default)]
    pub out_dir: String,
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: PipelineConfig = toml::from_str(text)
            .map_err(|e| CliError::Input(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> CliResult<()> {
        if self.experiment.h_values.is_empty() || self.experiment.m_values.is_empty() {
            return Err(CliError::Input(
                "experiment.h_values and experiment.m_values must be non-empty".into(),
            ));
        }
        if self.experiment.h_values.contains(&0) || self.experiment.m_values.iter().any(|&m| m < 2)
        {
            return Err(CliError::Input(
                "experiment needs h >= 1 and m >= 2".into(),
            ));
        }
        self.grid.resolve()?;
        self.fit.parse_kinds()?;
        self.model.sign()?;
        Ok(())
    }

    /// Hash of the scientific sections only, 16 hex digits.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Scientific<'a> {
            grid: &'a GridConfig,
            experiment: &'a ExperimentConfig,
            fit: &'a FitConfig,
            model: &'a ModelConfig,
        }
        let canonical = toml::to_string(&Scientific {
            grid: &self.grid,
            experiment: &self.experiment,
            fit: &self.fit,
            model: &self.model,
        })
        .expect("config sections always serialize");
        hash_hex16(canonical.as_bytes())
    }
}

/// First 16 hex digits of sha256.
pub fn hash_hex16(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
