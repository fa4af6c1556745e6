//! CSV and JSON output. Numbers use Rust's shortest round-trip formatting so
//! every written value parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::spectral::SpectralSolution;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// CSV with a leading `t` column followed by one column per series.
/// All series must share the first one's grid.
pub fn series_csv(headers: &[&str], columns: &[&TimeSeries]) -> Result<String> {
    if headers.len() != columns.len() + 1 {
        return Err(Error::Dimension(format!(
            "{} headers for {} columns plus time",
            headers.len(),
            columns.len()
        )));
    }
    let Some(first) = columns.first() else {
        return Err(Error::Dimension("no columns".into()));
    };
    if let Some(bad) = columns.iter().position(|c| !c.same_grid(first)) {
        return Err(Error::Dimension(format!("column {} is on a different grid", bad + 1)));
    }
    let mut out = headers.join(",");
    out.push('\n');
    for k in 0..first.len() {
        out.push_str(&fmt_f64(first.time(k)));
        for c in columns {
            out.push(',');
            out.push_str(&fmt_f64(c.values[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Full coefficient trajectory: `t`, then real and imaginary parts of
/// `ĉ_{-N} … ĉ_N`.
pub fn coefficients_csv(solution: &SpectralSolution) -> String {
    let n = solution.order as i64;
    let mut out = String::from("t");
    for m in -n..=n {
        let _ = write!(out, ",re_{m},im_{m}");
    }
    out.push('\n');
    for k in 0..solution.n_times() {
        out.push_str(&fmt_f64(solution.grid.time(k)));
        for z in solution.coeffs(k) {
            let _ = write!(out, ",{},{}", fmt_f64(z.re), fmt_f64(z.im));
        }
        out.push('\n');
    }
    out
}

/// Parses a numeric CSV with one header row into its columns.
pub fn parse_csv_columns(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let headers: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Dimension("empty CSV".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut cols = vec![Vec::new(); headers.len()];
    for (row, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != headers.len() {
            return Err(Error::Dimension(format!("row {} has {} fields", row + 1, fields.len())));
        }
        for (col, f) in cols.iter_mut().zip(fields) {
            col.push(f.trim().parse::<f64>().map_err(|e| {
                Error::Dimension(format!("row {}: cannot parse {f:?}: {e}", row + 1))
            })?);
        }
    }
    Ok((headers, cols))
}

/// Writes via a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("out", format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// `<path>.meta.json` next to an output file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrips_exactly() {
        let a = TimeSeries::new(0.0, 0.1, vec![0.1 + 0.2, 1e-300, -3.5]);
        let b = TimeSeries::new(0.0, 0.1, vec![f64::MIN_POSITIVE, 2.0 / 3.0, 0.0]);
        let text = series_csv(&["t", "a", "b"], &[&a, &b]).unwrap();
        let (h, cols) = parse_csv_columns(&text).unwrap();
        assert_eq!(h, ["t", "a", "b"]);
        assert_eq!(cols[1], a.values);
        assert_eq!(cols[2], b.values);
        assert_eq!(cols[0][2], 0.2);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = TimeSeries::new(0.0, 0.1, vec![1.0; 3]);
        let b = TimeSeries::new(0.0, 0.2, vec![1.0; 3]);
        assert!(series_csv(&["t", "a", "b"], &[&a, &b]).is_err());
        assert!(series_csv(&["t"], &[&a]).is_err());
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/rx.csv")), PathBuf::from("out/rx.csv.meta.json"));
    }
}
