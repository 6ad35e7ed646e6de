//! Subcommand implementations.

use crate::cache::CountCache;
use crate::cli::{Cli, Command};
use crate::config::{hash_hex16, log_spaced_grid, parse_kind, PipelineConfig, DEFAULT_GRID_POINTS, DEFAULT_N_MAX, DEFAULT_N_MIN};
use crate::csvio::{
    fmt_f64, read_alphapoints, read_wpoints, write_csv, ALPHAFIT_HEADER, BFIT_HEADER,
    GALLAGHER_HEADER, HL_HEADER, TUPLE_HEADER, WPOINTS_HEADER,
};
use crate::pipeline::{measure_point, run_pipeline, sweep_cached, PointRecord};
use crate::{with_threads, CliError, CliResult};
use primespan_core::experiment::{
    systematic_error_variance_exact, VarianceDivisor, WPoint,
};
use primespan_core::fitting::{
    fit_alpha_with_options, fit_b, fit_b_free_intercept, p_value, AlphaFitOptions,
};
use primespan_core::ktuple::{
    count_tuple_starts, gallagher_histogram, hl_convergence, hl_prediction, OffsetTuple,
};
use primespan_core::models::{asymptotic_mean, asymptotic_variance, classify_scale, Scale};
use primespan_core::sieve::{BasePrimes, IntervalSpec, SieveConfig};
use std::path::{Path, PathBuf};

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Experiment { n, h, m, population_divisor, csv, cache_dir } => {
            with_threads(threads, || {
                cmd_experiment(n, h, m, population_divisor, csv.as_deref(), cache_dir)
            })
        }
        Command::Sweep {
            h, m, n_min, n_max, points, n_list, out, population_divisor, cache_dir,
        } => with_threads(threads, || {
            let grid = resolve_grid_flags(n_min, n_max, points, n_list)?;
            cmd_sweep(h, m, &grid, &out, population_divisor, cache_dir)
        }),
        Command::FitB { input, h, m, out, free_intercept } => {
            cmd_fit_b(&input, h, m, out.as_deref(), free_intercept)
        }
        Command::FitAlpha { input, kind, h_min, m, out, inflate_errors } => {
            cmd_fit_alpha(&input, &kind, h_min, m, out.as_deref(), inflate_errors)
        }
        Command::Pipeline { config, out_dir, cache_dir } => {
            cmd_pipeline(&config, out_dir, cache_dir, threads)
        }
        Command::HlConstant { offsets, p_max, out } => {
            cmd_hl_constant(offsets, p_max, out.as_deref())
        }
        Command::TupleCount { x, offsets, p_max, out } => {
            with_threads(threads, || cmd_tuple_count(x, offsets, p_max, out.as_deref()))
        }
        Command::Gallagher { n, lambda, stride, out } => {
            with_threads(threads, || cmd_gallagher(n, lambda, stride, &out))
        }
        Command::Pvalue { chi2, ndof } => {
            let p = p_value(chi2, ndof)?;
            println!("{}", fmt_f64(p));
            Ok(())
        }
    }
}

fn resolve_grid_flags(
    n_min: Option<u64>,
    n_max: Option<u64>,
    points: Option<u32>,
    n_list: Option<Vec<u64>>,
) -> CliResult<Vec<u64>> {
    if let Some(list) = n_list {
        if list.windows(2).any(|w| w[0] >= w[1]) || list.len() < 2 {
            return Err(CliError::Input(
                "--n-list must be strictly increasing with at least 2 entries".into(),
            ));
        }
        return Ok(list);
    }
    log_spaced_grid(
        n_min.unwrap_or(DEFAULT_N_MIN),
        n_max.unwrap_or(DEFAULT_N_MAX),
        points.unwrap_or(DEFAULT_GRID_POINTS),
    )
}

fn divisor_flag(population: bool) -> VarianceDivisor {
    if population {
        VarianceDivisor::Population
    } else {
        VarianceDivisor::Sample
    }
}

fn open_cache(dir: Option<PathBuf>) -> CliResult<Option<CountCache>> {
    match dir {
        None => Ok(None),
        Some(d) => Ok(Some(CountCache::open(d)?)),
    }
}

fn cmd_experiment(
    n: u64,
    h: u64,
    m: u64,
    population: bool,
    csv: Option<&Path>,
    cache_dir: Option<PathBuf>,
) -> CliResult<()> {
    let spec = IntervalSpec::new(n, h, m)?;
    let cache = open_cache(cache_dir)?;
    let base = BasePrimes::for_window(&spec.window());
    let scfg = SieveConfig::default();
    let record = measure_point(&spec, &base, &scfg, divisor_flag(population), cache.as_ref())?;
    let s = &record.summary;

    let (nf, hf, mf) = (n as f64, h as f64, m as f64);
    let class = classify_scale(nf, hf);
    let scale_name = match class.scale {
        Scale::Microscopic => "microscopic",
        Scale::Mesoscopic => "mesoscopic",
        Scale::Macroscopic => "macroscopic",
    };
    let w = spec.window();
    println!(
        "N={n} h={h} m={m}  window [{}, {})  {scale_name} (h/log N = {:.3})",
        w.lo(),
        w.hi(),
        class.ratio
    );
    println!("empirical mean        = {:.6}", s.mean);
    println!("asymptotic mean       = {:.6}", asymptotic_mean(nf, hf));
    println!("empirical variance    = {:.6}", s.variance);
    println!("asymptotic variance   = {:.6}", asymptotic_variance(nf, hf));
    println!("w                     = {:.6} +- {:.6}", s.w, s.w_err);
    println!(
        "eps_sys               = {:.4}%   (abs mean shift {:.6})",
        100.0 * s.sys_rel_err,
        s.sys_abs_err_mean
    );
    println!("eps_stat              = {:.4}%", 100.0 * s.stat_rel_err);
    println!(
        "variance sys shift    = {:.6} (first order), {:.6} (exact)",
        s.sys_abs_err_variance,
        systematic_error_variance_exact(nf, hf, mf)?
    );

    if let Some(path) = csv {
        let hash = hash_hex16(
            format!("experiment|n={n}|h={h}|m={m}|population={population}").as_bytes(),
        );
        let row = format!(
            "{},{},{},{},{},{},{},{}",
            n,
            fmt_f64(record.wpoint.x),
            fmt_f64(s.w),
            fmt_f64(s.w_err),
            fmt_f64(s.mean),
            fmt_f64(s.variance),
            fmt_f64(s.sys_rel_err),
            fmt_f64(s.stat_rel_err)
        );
        write_csv(path, &hash, WPOINTS_HEADER, &[row])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(
    h: u64,
    m: u64,
    grid: &[u64],
    out: &Path,
    population: bool,
    cache_dir: Option<PathBuf>,
) -> CliResult<()> {
    let cache = open_cache(cache_dir)?;
    let mut max_hi = 0u64;
    for &n in grid {
        if let Ok(spec) = IntervalSpec::new(n, h, m) {
            max_hi = max_hi.max(spec.window().hi());
        }
    }
    if max_hi == 0 {
        return Err(CliError::Input(
            "no grid centre admits a valid window for these h, m".into(),
        ));
    }
    let base = BasePrimes::for_window(&primespan_core::sieve::Window::new(2, max_hi).expect("max_hi > 2"));
    let scfg = SieveConfig::default();
    let outcome = sweep_cached(h, m, grid, &base, &scfg, divisor_flag(population), cache.as_ref());

    let mut rows = Vec::new();
    let mut kept = 0usize;
    for (n, res) in &outcome {
        match res {
            Ok(rec) => {
                kept += 1;
                rows.push(wpoint_row_public(rec));
            }
            Err(e) => log::warn!("excluding N={n}: {e}"),
        }
    }
    let hash = hash_hex16(
        format!(
            "sweep|h={h}|m={m}|population={population}|grid={}",
            grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";")
        )
        .as_bytes(),
    );
    write_csv(out, &hash, WPOINTS_HEADER, &rows)?;
    println!("wrote {} ({kept}/{} points)", out.display(), grid.len());
    Ok(())
}

fn wpoint_row_public(rec: &PointRecord) -> String {
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

fn cmd_fit_b(
    input: &Path,
    h: u64,
    m: u64,
    out: Option<&Path>,
    free_intercept: bool,
) -> CliResult<()> {
    let points: Vec<WPoint> = read_wpoints(input)?
        .into_iter()
        .filter(|p| p.w_err > 0.0)
        .collect();
    let fit = fit_b(&points)?;
    let b = fit.param("b").expect("fit_b yields b");
    println!(
        "b = {:.6} +- {:.6}  (chi2 = {:.4}, ndof = {}, chi2_red = {:.4}, p = {:.4})",
        b.value, b.error, fit.chi2, fit.ndof, fit.chi2_reduced, fit.p_value
    );
    if free_intercept {
        let diag = fit_b_free_intercept(&points)?;
        let a = diag.param("intercept").expect("intercept");
        let bf = diag.param("b").expect("b");
        println!(
            "free-intercept diagnostic: intercept = {:.6} +- {:.6}, b = {:.6} +- {:.6}, p = {:.4}",
            a.value, a.error, bf.value, bf.error, diag.p_value
        );
    }
    if let Some(path) = out {
        let hash = hash_hex16(format!("fit-b|{}|h={h}|m={m}", input.display()).as_bytes());
        let row = format!(
            "{},{},{},{},{},{},{}",
            h,
            m,
            fmt_f64(b.value),
            fmt_f64(b.error),
            fmt_f64(fit.chi2),
            fit.ndof,
            fmt_f64(fit.p_value)
        );
        write_csv(path, &hash, BFIT_HEADER, &[row])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_fit_alpha(
    input: &Path,
    kind_label: &str,
    h_min: u64,
    m: u64,
    out: Option<&Path>,
    inflate_errors: bool,
) -> CliResult<()> {
    let kind = parse_kind(kind_label)?;
    let points = read_alphapoints(input)?;
    let opts = AlphaFitOptions { h_min, inflate_errors, ..AlphaFitOptions::default() };
    let fit = fit_alpha_with_options(kind, &points, &opts)?;
    for p in &fit.fit.params {
        println!("{} = {:.6} +- {:.6}", p.name, p.value, p.error);
    }
    println!(
        "B = {:.6} +- {:.6}  (chi2_red = {:.4}, ndof = {}, p = {:.4})",
        fit.b, fit.b_err, fit.fit.chi2_reduced, fit.fit.ndof, fit.fit.p_value
    );
    if fit.fit.flags.constraint_violated {
        println!("warning: constraint alpha1 > alpha2 violated at the optimum");
    }
    if fit.fit.flags.degenerate {
        println!("warning: near-degenerate parameter directions");
    }
    if let Some(path) = out {
        let hash = hash_hex16(
            format!("fit-alpha|{}|kind={kind}|h_min={h_min}|m={m}", input.display()).as_bytes(),
        );
        let cell = |name: &str| match fit.fit.param(name) {
            Some(p) => (fmt_f64(p.value), fmt_f64(p.error)),
            None => (String::new(), String::new()),
        };
        let (a1, a1e) = cell("alpha1");
        let (a2, a2e) = cell("alpha2");
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            kind.label(),
            m,
            a1,
            a1e,
            a2,
            a2e,
            fmt_f64(fit.b),
            fmt_f64(fit.b_err),
            fmt_f64(fit.fit.chi2_reduced),
            fmt_f64(fit.fit.p_value)
        );
        write_csv(path, &hash, ALPHAFIT_HEADER, &[row])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_pipeline(
    config_path: &Path,
    out_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    cli_threads: usize,
) -> CliResult<()> {
    let cfg = PipelineConfig::load(config_path)?;
    let out_dir = out_dir.unwrap_or_else(|| {
        if cfg.run.out_dir.is_empty() {
            PathBuf::from("out")
        } else {
            PathBuf::from(&cfg.run.out_dir)
        }
    });
    let cache_dir = cache_dir.or_else(|| {
        if cfg.run.cache_dir.is_empty() {
            None
        } else {
            Some(PathBuf::from(&cfg.run.cache_dir))
        }
    });
    let cache = open_cache(cache_dir)?;
    let threads = if cli_threads > 0 { cli_threads } else { cfg.run.threads };

    let summary = with_threads(threads, || run_pipeline(&cfg, &out_dir, cache.as_ref()))?;

    println!("config_hash={}", summary.config_hash);
    println!(
        "wrote {} wpoints files, bfit.csv, alphafit.csv, report.txt under {}",
        summary.b_rows.len(),
        out_dir.display()
    );
    for (m, f) in &summary.alpha_fits {
        println!(
            "kind {:>3}, m={m}: B = {:.4} +- {:.4} (chi2_red {:.3}, p {:.3})",
            f.kind().label(),
            f.b,
            f.b_err,
            f.fit.chi2_reduced,
            f.fit.p_value
        );
    }
    for (m, ranking) in &summary.rankings {
        let labels: Vec<&str> = ranking.iter().map(|k| k.label()).collect();
        println!("ranking m={m}: {}", labels.join(" > "));
    }
    Ok(())
}

fn cmd_hl_constant(offsets: Vec<u64>, p_max: u64, out: Option<&Path>) -> CliResult<()> {
    let tuple = OffsetTuple::new(offsets)?;
    let conv = hl_convergence(&tuple, p_max)?;
    println!("tuple {tuple}  k = {}", tuple.k());
    println!("singular series at p_max {:>12}: {}", p_max, fmt_f64(conv.at_p_max));
    println!("singular series at p_max {:>12}: {}", 2 * p_max, fmt_f64(conv.at_double));
    println!("truncation delta              : {}", fmt_f64(conv.abs_delta));
    if let Some(path) = out {
        let offsets_cell = tuple
            .offsets()
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let hash = hash_hex16(format!("hl|{offsets_cell}|p_max={p_max}").as_bytes());
        let row = format!(
            "{},{},{},{},{}",
            offsets_cell,
            p_max,
            fmt_f64(conv.at_p_max),
            fmt_f64(conv.at_double),
            fmt_f64(conv.abs_delta)
        );
        write_csv(path, &hash, HL_HEADER, &[row])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_tuple_count(x: u64, offsets: Vec<u64>, p_max: u64, out: Option<&Path>) -> CliResult<()> {
    let tuple = OffsetTuple::new(offsets)?;
    let count = count_tuple_starts(x, &tuple)?;
    let constant = primespan_core::ktuple::hl_constant(&tuple, p_max)?;
    let prediction = hl_prediction(x, &tuple, p_max)?;
    let ratio = if prediction > 0.0 { count as f64 / prediction } else { f64::NAN };
    println!("tuple {tuple}  x = {x}");
    println!("starts counted         = {count}");
    println!("singular series (p_max {p_max}) = {}", fmt_f64(constant));
    println!("first-order prediction = {}", fmt_f64(prediction));
    println!("count / prediction     = {}", fmt_f64(ratio));
    if let Some(path) = out {
        let offsets_cell = tuple
            .offsets()
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let hash = hash_hex16(format!("tuple|{offsets_cell}|x={x}|p_max={p_max}").as_bytes());
        let row = format!(
            "{},{},{},{},{},{}",
            x,
            tuple.k(),
            count,
            fmt_f64(constant),
            fmt_f64(prediction),
            fmt_f64(ratio)
        );
        write_csv(path, &hash, TUPLE_HEADER, &[row])?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gallagher(n: u64, lambda: f64, stride: u64, out: &Path) -> CliResult<()> {
    let hist = gallagher_histogram(n, lambda, stride)?;
    let rows: Vec<String> = (0..=hist.max_k())
        .map(|k| {
            format!(
                "{},{},{},{}",
                k,
                hist.counts.get(k).copied().unwrap_or(0),
                fmt_f64(hist.empirical_freq(k)),
                fmt_f64(hist.poisson_pred(k))
            )
        })
        .collect();
    let hash = hash_hex16(
        format!("gallagher|n={n}|lambda={}|stride={stride}", fmt_f64(lambda)).as_bytes(),
    );
    write_csv(out, &hash, GALLAGHER_HEADER, &rows)?;
    println!(
        "samples = {}, P(0) = {:.5} (Poisson: {:.5}), TV(k<=10) = {:.5}",
        hist.samples,
        hist.empirical_freq(0),
        hist.poisson_pred(0),
        hist.tv_distance(10)
    );
    println!("wrote {}", out.display());
    Ok(())
}
