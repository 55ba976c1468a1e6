//! CSV tables: time or lag in the first column, row-major matrix entries
//! after it, floats with 17 significant digits.

use std::error::Error;
use std::path::Path;

use nalgebra::DMatrix;

/// `{:.16e}` keeps 17 significant digits, enough to round-trip an f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One column group per entry of `groups`, each `(prefix, matrices)`.
pub fn write_table(
    path: &Path,
    first: &str,
    times: &[f64],
    groups: &[(&str, &[DMatrix<f64>])],
) -> Result<(), Box<dyn Error>> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![first.to_string()];
    for (prefix, mats) in groups {
        let (r, c) = mats.first().map_or((0, 0), |m| m.shape());
        for i in 0..r {
            for j in 0..c {
                header.push(format!("{prefix}_{}_{}", i + 1, j + 1));
            }
        }
    }
    w.write_record(&header)?;
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![fmt_float(t)];
        for (_, mats) in groups {
            let m = &mats[k];
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    row.push(fmt_float(m[(i, j)]));
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_table`] with a single square matrix per row.
pub fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<DMatrix<f64>>), Box<dyn Error>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("{}: row {}: {e}", path.display(), line + 2))
            })
            .collect::<Result<_, _>>()?;
        let entries = nums.len().saturating_sub(1);
        let d = (entries as f64).sqrt().round() as usize;
        if d == 0 || d * d != entries {
            return Err(format!(
                "{}: row {} has {entries} entries, not a square matrix",
                path.display(),
                line + 2
            )
            .into());
        }
        if *dim.get_or_insert(d) != d {
            return Err(format!(
                "{}: row {} changes the matrix size",
                path.display(),
                line + 2
            )
            .into());
        }
        times.push(nums[0]);
        values.push(DMatrix::from_row_slice(d, d, &nums[1..]));
    }
    if times.is_empty() {
        return Err(format!("{}: no data rows", path.display()).into());
    }
    Ok((times, values))
}

/// Spacing of a uniform time column, checked to relative precision 1e-9.
pub fn uniform_spacing(times: &[f64]) -> Result<f64, String> {
    if times.len() < 2 {
        return Err("need at least two rows to infer the spacing".into());
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err("time column must increase".into());
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(times[k].abs()) + 1e-12 {
            return Err(format!("time column is not uniform at row {}", k + 2));
        }
    }
    Ok(h)
}
