//! CSV emission and parsing.
//!
//! Every file starts with a `# config_hash=<16 hex>` provenance comment
//! followed by the exact schema header. Floats are written with 17
//! significant digits (`{:.16e}`), decimal points only, so files round-trip
//! f64 exactly and byte-compare across runs.

use crate::{CliError, CliResult};
use primespan_core::experiment::WPoint;
use primespan_core::fitting::AlphaPoint;
use std::io::Write;
use std::path::Path;

pub const WPOINTS_HEADER: &str = "N,x,w,w_err,mean,variance,eps_sys,eps_stat";
pub const BFIT_HEADER: &str = "h,m,b,b_err,chi2,ndof,pvalue";
pub const ALPHAPOINTS_HEADER: &str = "h,alpha,alpha_err";
pub const ALPHAFIT_HEADER: &str =
    "kind,m,alpha1,alpha1_err,alpha2,alpha2_err,B,B_err,chi2_red,pvalue";
pub const GALLAGHER_HEADER: &str = "k,count,empirical_freq,poisson_pred";
pub const HL_HEADER: &str = "offsets,p_max,constant,constant_at_double,abs_delta";
pub const TUPLE_HEADER: &str = "x,k,count,hl_constant,hl_prediction,ratio";

/// Full-precision float cell: 17 significant digits, scientific.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV with the provenance comment, a fixed header and the rows.
pub fn write_csv(path: &Path, config_hash: &str, header: &str, rows: &[String]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + 64);
    out.push_str(&format!("# config_hash={config_hash}\n"));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Data lines of a CSV: comments stripped, header validated against `header`.
fn data_lines(path: &Path, header: &str) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(first) if first == header => {}
        Some(first) => {
            return Err(CliError::Input(format!(
                "{}: expected header {header:?}, found {first:?}",
                path.display()
            )))
        }
        None => {
            return Err(CliError::Input(format!("{}: empty file", path.display())))
        }
    }
    Ok(lines.map(str::to_owned).collect())
}

fn parse_field<T: std::str::FromStr>(field: &str, what: &str, line_no: usize) -> CliResult<T> {
    field.trim().parse().map_err(|_| {
        CliError::Input(format!("line {line_no}: cannot parse {what} from {field:?}"))
    })
}

/// Reads a wpoints CSV back into fit points.
pub fn read_wpoints(path: &Path) -> CliResult<Vec<WPoint>> {
    let mut points = Vec::new();
    for (i, line) in data_lines(path, WPOINTS_HEADER)?.iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(CliError::Input(format!(
                "line {}: expected 8 columns, found {}",
                i + 2,
                cols.len()
            )));
        }
        points.push(WPoint {
            n: parse_field(cols[0], "N", i + 2)?,
            x: parse_field(cols[1], "x", i + 2)?,
            w: parse_field(cols[2], "w", i + 2)?,
            w_err: parse_field(cols[3], "w_err", i + 2)?,
        });
    }
    Ok(points)
}

/// Reads an alpha-points CSV.
pub fn read_alphapoints(path: &Path) -> CliResult<Vec<AlphaPoint>> {
    let mut points = Vec::new();
    for (i, line) in data_lines(path, ALPHAPOINTS_HEADER)?.iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(CliError::Input(format!(
                "line {}: expected 3 columns, found {}",
                i + 2,
                cols.len()
            )));
        }
        points.push(AlphaPoint {
            h: parse_field(cols[0], "h", i + 2)?,
            alpha: parse_field(cols[1], "alpha", i + 2)?,
            alpha_err: parse_field(cols[2], "alpha_err", i + 2)?,
        });
    }
    Ok(points)
}
