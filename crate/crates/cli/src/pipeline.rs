//! The full measurement chain: cached sweeps for every `(h, m)`, the
//! `b(h, m)` fits, alpha derivation, parametrization fits and the final `B`
//! summary, all emitted as schema-stable CSVs plus a human-readable report.
//!
//! Everything here is deterministic for a fixed scientific configuration:
//! sweep points merge integer counts positionally, files are written in
//! config order, and floats are formatted at full precision, so outputs are
//! byte-identical at any worker count and across cold/warm cache runs.

use crate::cache::CountCache;
use crate::config::PipelineConfig;
use crate::csvio::{
    fmt_f64, write_csv, ALPHAFIT_HEADER, ALPHAPOINTS_HEADER, BFIT_HEADER, WPOINTS_HEADER,
};
use crate::{CliError, CliResult};
use primespan_core::error::Error as CoreError;
use primespan_core::experiment::{moments, MomentSummary, VarianceDivisor, WPoint};
use primespan_core::fitting::{
    compare_parametrizations, derive_alpha, fit_alpha_with_options, fit_b, fit_b_free_intercept,
    AlphaFitOptions, AlphaFitResult, AlphaPoint, FitResult,
};
use primespan_core::models::{ms_constant, AlphaKind, AlphaParametrization};
use primespan_core::sieve::{
    subinterval_counts_with, BasePrimes, IntervalSpec, SieveConfig, Window,
};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One successfully measured sweep point.
#[derive(Debug, Clone)]
pub struct PointRecord {
    pub summary: MomentSummary,
    pub wpoint: WPoint,
}

/// Measures one spec, going through the cache when one is attached.
pub fn measure_point(
    spec: &IntervalSpec,
    base: &BasePrimes,
    scfg: &SieveConfig,
    divisor: VarianceDivisor,
    cache: Option<&CountCache>,
) -> Result<PointRecord, CoreError> {
    let counts = match cache.and_then(|c| c.get(spec)) {
        Some(hit) => hit,
        None => {
            let fresh = subinterval_counts_with(spec, base, scfg)?;
            if let Some(c) = cache {
                if let Err(e) = c.put(&fresh) {
                    log::warn!("cache write failed for N={}: {e}", spec.n());
                }
            }
            fresh
        }
    };
    let summary = moments(&counts, divisor)?;
    Ok(PointRecord {
        summary,
        wpoint: WPoint {
            n: spec.n(),
            x: 1.0 / (spec.n() as f64).ln(),
            w: summary.w,
            w_err: summary.w_err,
        },
    })
}

/// Runs a grid of centres at fixed `(h, m)`, in input order.
pub fn sweep_cached(
    h: u64,
    m: u64,
    grid: &[u64],
    base: &BasePrimes,
    scfg: &SieveConfig,
    divisor: VarianceDivisor,
    cache: Option<&CountCache>,
) -> Vec<(u64, Result<PointRecord, CoreError>)> {
    let eval = |&n: &u64| {
        (
            n,
            IntervalSpec::new(n, h, m)
                .and_then(|spec| measure_point(&spec, base, scfg, divisor, cache)),
        )
    };
    #[cfg(feature = "parallel")]
    if scfg.execution == primespan_core::sieve::Execution::Parallel {
        return grid.par_iter().map(eval).collect();
    }
    grid.iter().map(eval).collect()
}

/// `b(h, m)` fit annotated with its sweep identity.
#[derive(Debug, Clone)]
pub struct BFitRow {
    pub h: u64,
    pub m: u64,
    pub fit: FitResult,
}

/// Everything the pipeline measured and fitted, for report rendering and
/// programmatic consumption.
#[derive(Debug)]
pub struct PipelineSummary {
    pub config_hash: String,
    pub grid: Vec<u64>,
    pub b_rows: Vec<BFitRow>,
    /// Free-intercept diagnostic fits, when enabled.
    pub b_free_rows: Vec<BFitRow>,
    /// `C = b(1, m)` estimates per m.
    pub c_rows: Vec<(u64, f64, f64)>,
    /// Derived alpha points per m.
    pub alpha_rows: Vec<(u64, AlphaPoint)>,
    /// Parametrization fits per m, in config kind order.
    pub alpha_fits: Vec<(u64, AlphaFitResult)>,
    /// Kinds ranked by p-value per m.
    pub rankings: Vec<(u64, Vec<AlphaKind>)>,
}

impl PipelineSummary {
    /// The fit for a given kind and m, if it ran.
    pub fn alpha_fit(&self, kind: AlphaKind, m: u64) -> Option<&AlphaFitResult> {
        self.alpha_fits
            .iter()
            .find(|(fm, f)| *fm == m && f.kind() == kind)
            .map(|(_, f)| f)
    }

    /// The b fit for `(h, m)`, if it ran.
    pub fn b_fit(&self, h: u64, m: u64) -> Option<&FitResult> {
        self.b_rows
            .iter()
            .find(|r| r.h == h && r.m == m)
            .map(|r| &r.fit)
    }
}

fn wpoint_row(rec: &PointRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        rec.wpoint.n,
        fmt_f64(rec.wpoint.x),
        fmt_f64(rec.wpoint.w),
        fmt_f64(rec.wpoint.w_err),
        fmt_f64(rec.summary.mean),
        fmt_f64(rec.summary.variance),
        fmt_f64(rec.summary.sys_rel_err),
        fmt_f64(rec.summary.stat_rel_err)
    )
}

fn bfit_row(row: &BFitRow) -> CliResult<String> {
    let b = row
        .fit
        .param("b")
        .ok_or_else(|| CliError::Numerical("b fit lost its parameter".into()))?;
    Ok(format!(
        "{},{},{},{},{},{},{}",
        row.h,
        row.m,
        fmt_f64(b.value),
        fmt_f64(b.error),
        fmt_f64(row.fit.chi2),
        row.fit.ndof,
        fmt_f64(row.fit.p_value)
    ))
}

fn alphafit_row(m: u64, f: &AlphaFitResult) -> String {
    let cell = |name: &str| -> (String, String) {
        match f.fit.param(name) {
            Some(p) => (fmt_f64(p.value), fmt_f64(p.error)),
            None => (String::new(), String::new()),
        }
    };
    let (a1, a1e) = cell("alpha1");
    let (a2, a2e) = cell("alpha2");
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        f.kind().label(),
        m,
        a1,
        a1e,
        a2,
        a2e,
        fmt_f64(f.b),
        fmt_f64(f.b_err),
        fmt_f64(f.fit.chi2_reduced),
        fmt_f64(f.fit.p_value)
    )
}

/// Runs the configured pipeline, writing CSVs and `report.txt` under
/// `out_dir`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    out_dir: &Path,
    cache: Option<&CountCache>,
) -> CliResult<PipelineSummary> {
    let grid = cfg.grid.resolve()?;
    let hash = cfg.config_hash();
    let divisor = cfg.experiment.divisor();
    let kinds = cfg.fit.parse_kinds()?;
    std::fs::create_dir_all(out_dir)?;

    // One base-prime table sized for the widest valid window.
    let mut max_hi = 0u64;
    for &m in &cfg.experiment.m_values {
        for &h in &cfg.experiment.h_values {
            for &n in &grid {
                if let Ok(spec) = IntervalSpec::new(n, h, m) {
                    max_hi = max_hi.max(spec.window().hi());
                }
            }
        }
    }
    if max_hi == 0 {
        return Err(CliError::Input(
            "no valid (N, h, m) combination in the configuration".into(),
        ));
    }
    let base = BasePrimes::for_window(&Window::new(2, max_hi).expect("max_hi > 2"));
    let scfg = SieveConfig::default();

    let mut summary = PipelineSummary {
        config_hash: hash.clone(),
        grid: grid.clone(),
        b_rows: Vec::new(),
        b_free_rows: Vec::new(),
        c_rows: Vec::new(),
        alpha_rows: Vec::new(),
        alpha_fits: Vec::new(),
        rankings: Vec::new(),
    };

    for &m in &cfg.experiment.m_values {
        let mut alpha_points: Vec<AlphaPoint> = Vec::new();
        for &h in &cfg.experiment.h_values {
            let outcome = sweep_cached(h, m, &grid, &base, &scfg, divisor, cache);
            for (n, res) in &outcome {
                if let Err(e) = res {
                    log::warn!("sweep h={h} m={m}: excluding N={n}: {e}");
                }
            }
            let records: Vec<&PointRecord> =
                outcome.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
            let rows: Vec<String> = records.iter().map(|r| wpoint_row(r)).collect();
            write_csv(
                &out_dir.join(format!("wpoints_h{h}_m{m}.csv")),
                &hash,
                WPOINTS_HEADER,
                &rows,
            )?;

            let fit_points: Vec<WPoint> = records
                .iter()
                .filter(|r| r.wpoint.w_err > 0.0)
                .map(|r| r.wpoint)
                .collect();
            let fit = fit_b(&fit_points)?;
            if cfg.fit.free_intercept_diagnostic {
                summary.b_free_rows.push(BFitRow {
                    h,
                    m,
                    fit: fit_b_free_intercept(&fit_points)?,
                });
            }
            if h == 1 {
                let b = fit.param("b").expect("fit_b always yields b");
                summary.c_rows.push((m, b.value, b.error));
            } else {
                let point = derive_alpha(&fit, 1.0, h)?;
                alpha_points.push(point);
                summary.alpha_rows.push((m, point));
            }
            summary.b_rows.push(BFitRow { h, m, fit });
        }

        let alpha_csv_rows: Vec<String> = alpha_points
            .iter()
            .map(|p| format!("{},{},{}", p.h, fmt_f64(p.alpha), fmt_f64(p.alpha_err)))
            .collect();
        write_csv(
            &out_dir.join(format!("alphapoints_m{m}.csv")),
            &hash,
            ALPHAPOINTS_HEADER,
            &alpha_csv_rows,
        )?;

        let mut fits_for_m: Vec<AlphaFitResult> = Vec::new();
        for &kind in &kinds {
            let usable = alpha_points
                .iter()
                .filter(|p| p.h >= cfg.fit.h_min)
                .count();
            if usable < kind.n_params() + 1 {
                log::warn!(
                    "m={m}: skipping kind {kind} fit: {usable} usable alpha points \
                     (h >= {}), need {}",
                    cfg.fit.h_min,
                    kind.n_params() + 1
                );
                continue;
            }
            let opts = AlphaFitOptions {
                h_min: cfg.fit.h_min,
                inflate_errors: cfg.fit.inflate_errors,
                ..AlphaFitOptions::default()
            };
            let fit = fit_alpha_with_options(kind, &alpha_points, &opts)?;
            fits_for_m.push(fit.clone());
            summary.alpha_fits.push((m, fit));
        }
        if !fits_for_m.is_empty() {
            let order = compare_parametrizations(&fits_for_m);
            summary
                .rankings
                .push((m, order.into_iter().map(|i| fits_for_m[i].kind()).collect()));
        }
    }

    let bfit_rows: Vec<String> = summary
        .b_rows
        .iter()
        .map(bfit_row)
        .collect::<CliResult<_>>()?;
    write_csv(&out_dir.join("bfit.csv"), &hash, BFIT_HEADER, &bfit_rows)?;
    if cfg.fit.free_intercept_diagnostic {
        let rows: Vec<String> = summary
            .b_free_rows
            .iter()
            .map(bfit_row)
            .collect::<CliResult<_>>()?;
        write_csv(
            &out_dir.join("bfit_free_intercept.csv"),
            &hash,
            BFIT_HEADER,
            &rows,
        )?;
    }

    let alphafit_rows: Vec<String> = summary
        .alpha_fits
        .iter()
        .map(|(m, f)| alphafit_row(*m, f))
        .collect();
    write_csv(
        &out_dir.join("alphafit.csv"),
        &hash,
        ALPHAFIT_HEADER,
        &alphafit_rows,
    )?;

    let report = render_report(cfg, &summary);
    std::fs::write(out_dir.join("report.txt"), report)?;
    Ok(summary)
}

fn render_report(cfg: &PipelineConfig, s: &PipelineSummary) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "primespan pipeline report");
    let _ = writeln!(out, "config_hash={}", s.config_hash);
    let _ = writeln!(out);

    let _ = writeln!(
        out,
        "N grid: {} points in [{}, {}]",
        s.grid.len(),
        s.grid.first().copied().unwrap_or(0),
        s.grid.last().copied().unwrap_or(0)
    );
    let _ = writeln!(out);

    let _ = writeln!(out, "b(h, m) fits of w = 1 - b/log N (intercept fixed at 1):");
    let _ = writeln!(
        out,
        "  {:>8} {:>9} {:>12} {:>10} {:>10} {:>9}",
        "h", "m", "b", "b_err", "chi2_red", "p_value"
    );
    for row in &s.b_rows {
        let b = row.fit.param("b").expect("b fit parameter");
        let _ = writeln!(
            out,
            "  {:>8} {:>9} {:>12.6} {:>10.6} {:>10.4} {:>9.4}",
            row.h, row.m, b.value, b.error, row.fit.chi2_reduced, row.fit.p_value
        );
    }
    let _ = writeln!(out);

    if !s.c_rows.is_empty() {
        let _ = writeln!(out, "C from h = 1 (frozen to exactly 1 for alpha derivation):");
        for (m, c, e) in &s.c_rows {
            let _ = writeln!(out, "  m={m}: C = {c:.6} +- {e:.6}");
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "alpha(h, m) = (b - 1)/log h:");
    let _ = writeln!(
        out,
        "  {:>8} {:>9} {:>12} {:>10}",
        "h", "m", "alpha", "alpha_err"
    );
    for (m, p) in &s.alpha_rows {
        let _ = writeln!(
            out,
            "  {:>8} {:>9} {:>12.6} {:>10.6}",
            p.h, m, p.alpha, p.alpha_err
        );
    }
    let _ = writeln!(out);

    let _ = writeln!(
        out,
        "parametrization fits (alpha points with h >= {}):",
        cfg.fit.h_min
    );
    let _ = writeln!(
        out,
        "  {:>4} {:>9} {:>22} {:>22} {:>9} {:>8} {:>9} {:>8}",
        "kind", "m", "alpha1", "alpha2", "B", "B_err", "chi2_red", "p_value"
    );
    for (m, f) in &s.alpha_fits {
        let param_cell = |name: &str| match f.fit.param(name) {
            Some(p) => format!("{:.4} +- {:.4}", p.value, p.error),
            None => "-".to_string(),
        };
        let mut line = format!(
            "  {:>4} {:>9} {:>22} {:>22} {:>9.4} {:>8.4} {:>9.4} {:>8.4}",
            f.kind().label(),
            m,
            param_cell("alpha1"),
            param_cell("alpha2"),
            f.b,
            f.b_err,
            f.fit.chi2_reduced,
            f.fit.p_value
        );
        if f.fit.flags.constraint_violated {
            line.push_str("  [constraint alpha1 > alpha2 violated]");
        }
        if f.fit.flags.degenerate {
            line.push_str("  [degenerate directions]");
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out);

    for (m, ranking) in &s.rankings {
        let labels: Vec<&str> = ranking.iter().map(|k| k.label()).collect();
        let _ = writeln!(out, "ranking by p-value, m={m}: {}", labels.join(" > "));
    }
    if !s.rankings.is_empty() {
        let _ = writeln!(out);
    }

    let reference = ms_constant();
    let _ = writeln!(out, "finite-size constant B (reference gamma + log(2 pi) - 1 = {reference:.6}):");
    for (m, f) in &s.alpha_fits {
        let z = if f.b_err > 0.0 {
            (f.b - reference) / f.b_err
        } else {
            f64::INFINITY
        };
        let formula = match f.parametrization {
            AlphaParametrization::I { .. } => "1 + alpha1",
            AlphaParametrization::II { .. } => "1 - alpha2",
            AlphaParametrization::III { .. } => "1 + alpha1 - alpha2",
        };
        let _ = writeln!(
            out,
            "  kind {:>3}, m={m}: B = {formula} = {:.4} +- {:.4}  (z = {z:+.2})",
            f.kind().label(),
            f.b,
            f.b_err
        );
    }

    // Headline value: the best-fitting parametrization per m.
    for (m, ranking) in &s.rankings {
        if let Some(best) = ranking.first() {
            if let Some(f) = s.alpha_fit(*best, *m) {
                let _ = writeln!(
                    out,
                    "final B (best fit, kind {}, m={m}): {:.4} +- {:.4}",
                    best.label(),
                    f.b,
                    f.b_err
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CountCache;

    fn tiny_config(extra: &str) -> PipelineConfig {
        PipelineConfig::from_toml(&format!(
            r#"
[grid]
n_list = [100000000, 200000000, 400000000]

[experiment]
h_values = [1, 300]
m_values = [500]
{extra}
"#
        ))
        .unwrap()
    }

    #[test]
    fn h1_feeds_c_and_stays_out_of_alpha_fits() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(&tiny_config(""), dir.path(), None).unwrap();
        // C estimated from h = 1.
        assert_eq!(summary.c_rows.len(), 1);
        let (m, c, _) = summary.c_rows[0];
        assert_eq!(m, 500);
        assert!((c - 1.0).abs() < 0.5, "C = {c}");
        // Only h = 300 yields an alpha point; a single point cannot support
        // any parametrization fit, so all kinds are skipped gracefully.
        assert_eq!(summary.alpha_rows.len(), 1);
        assert_eq!(summary.alpha_rows[0].1.h, 300);
        assert!(summary.alpha_fits.is_empty());
        assert!(summary.rankings.is_empty());

        for name in [
            "wpoints_h1_m500.csv",
            "wpoints_h300_m500.csv",
            "alphapoints_m500.csv",
            "bfit.csv",
            "alphafit.csv",
            "report.txt",
        ] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        // No diagnostic file unless requested.
        assert!(!dir.path().join("bfit_free_intercept.csv").exists());
    }

    #[test]
    fn free_intercept_diagnostic_emits_its_own_table() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("\n[fit]\nfree_intercept_diagnostic = true\n");
        let summary = run_pipeline(&cfg, dir.path(), None).unwrap();
        assert_eq!(summary.b_free_rows.len(), 2);
        assert!(dir.path().join("bfit_free_intercept.csv").exists());
    }

    #[test]
    fn warm_cache_reproduces_cold_results() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CountCache::open(dir.path().join("cache")).unwrap();
        let cold = run_pipeline(&tiny_config(""), &dir.path().join("cold"), Some(&cache)).unwrap();
        let warm = run_pipeline(&tiny_config(""), &dir.path().join("warm"), Some(&cache)).unwrap();
        let b_cold = cold.b_fit(300, 500).unwrap().param("b").unwrap().value;
        let b_warm = warm.b_fit(300, 500).unwrap().param("b").unwrap().value;
        assert_eq!(b_cold.to_bits(), b_warm.to_bits());
        let a = std::fs::read(dir.path().join("cold/bfit.csv")).unwrap();
        let b = std::fs::read(dir.path().join("warm/bfit.csv")).unwrap();
        assert_eq!(a, b);
    }
}
