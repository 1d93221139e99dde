//! Plain-text matrix I/O and atomic file output.
//!
//! Matrices are comma-separated with no header. Every writer goes through
//! [`write_atomic`], so a crashed run never leaves a half-written artifact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a headerless CSV file into rows of trimmed string cells.
/// Blank lines are skipped; ragged rows are a format error.
pub fn read_cells(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected {w} columns, found {}", cells.len()),
                })
            }
            _ => {}
        }
        rows.push((idx + 1, cells));
    }
    Ok(rows)
}

pub fn read_real_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_cells(path)?;
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.1.len());
    let mut out = DMatrix::zeros(n, m);
    for (i, (line, cells)) in rows.iter().enumerate() {
        for (j, cell) in cells.iter().enumerate() {
            out[(i, j)] = cell.parse::<f64>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("cannot parse '{cell}' as a real number"),
            })?;
        }
    }
    Ok(out)
}

pub fn format_real_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 12);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_real_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, format_real_matrix(m).as_bytes())
}
