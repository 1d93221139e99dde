//! Ordinal functional datasets and their CSV representation.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;

/// N subjects observed on a shared T-point grid, each cell one of L ordered
/// levels, together with P scalar covariates per subject.
///
/// The dataset is immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct OrdinalFunctionalDataset {
    outcomes: DMatrix<usize>,
    covariates: DMatrix<f64>,
    time_grid: Vec<f64>,
    n_levels: usize,
    warnings: Vec<String>,
}

impl OrdinalFunctionalDataset {
    /// Validates and assembles a dataset. `n_levels` defaults to one more
    /// than the largest observed level.
    pub fn new(
        outcomes: DMatrix<usize>,
        covariates: DMatrix<f64>,
        time_grid: Vec<f64>,
        n_levels: Option<usize>,
    ) -> Result<Self> {
        let (n, t) = outcomes.shape();
        if n == 0 || t == 0 {
            return Err(Error::InvalidInput("outcome matrix is empty".into()));
        }
        if covariates.nrows() != n {
            return Err(Error::Dimension(format!(
                "{n} outcome rows but {} covariate rows",
                covariates.nrows()
            )));
        }
        if covariates.ncols() == 0 {
            return Err(Error::InvalidInput("at least one covariate is required".into()));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        if time_grid.len() != t {
            return Err(Error::Dimension(format!(
                "time grid has {} points but outcomes have {t} columns",
                time_grid.len()
            )));
        }
        if time_grid.windows(2).any(|w| w[1] <= w[0]) || time_grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("time grid must be finite and strictly increasing".into()));
        }
        let max_level = outcomes.iter().copied().max().unwrap_or(0);
        let n_levels = match n_levels {
            Some(l) if l <= max_level => {
                return Err(Error::InvalidInput(format!(
                    "observed level {max_level} is outside 0..{l}"
                )))
            }
            Some(l) => l,
            None => max_level + 1,
        };
        if n_levels < 2 {
            return Err(Error::InvalidInput("at least two outcome levels are required".into()));
        }
        let mut seen = vec![false; n_levels];
        for &y in outcomes.iter() {
            seen[y] = true;
        }
        let warnings = seen
            .iter()
            .enumerate()
            .filter(|(l, s)| !**s && *l <= max_level)
            .map(|(l, _)| format!("level {l} never occurs; treated as an empty category"))
            .collect();
        Ok(Self {
            outcomes,
            covariates,
            time_grid,
            n_levels,
            warnings,
        })
    }

    pub fn outcomes(&self) -> &DMatrix<usize> {
        &self.outcomes
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_subjects(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_timepoints(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    /// Non-fatal issues found during validation (e.g. gaps in the levels).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The dataset restricted to the given subjects, keeping L and the grid.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("subset has no subjects".into()));
        }
        let outcomes = self.outcomes.select_rows(rows);
        let covariates = self.covariates.select_rows(rows);
        Self::new(outcomes, covariates, self.time_grid.clone(), Some(self.n_levels))
    }
}

/// Reads a dataset from headerless CSV files. Without a grid file the grid
/// is 1..T.
pub fn load_dataset(
    outcome_path: &Path,
    covariate_path: &Path,
    grid_path: Option<&Path>,
    n_levels: Option<usize>,
) -> Result<OrdinalFunctionalDataset> {
    let cells = io::read_cells(outcome_path)?;
    let n = cells.len();
    let t = cells.first().map_or(0, |r| r.1.len());
    let mut outcomes = DMatrix::zeros(n, t);
    for (i, (line, row)) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            outcomes[(i, j)] = cell.parse::<usize>().map_err(|_| Error::Format {
                path: outcome_path.to_path_buf(),
                line: *line,
                msg: format!("outcome '{cell}' is not a non-negative integer"),
            })?;
        }
    }
    let covariates = io::read_real_matrix(covariate_path)?;
    if covariates.nrows() != n {
        return Err(Error::Format {
            path: covariate_path.to_path_buf(),
            line: covariates.nrows(),
            msg: format!("{} covariate rows but {n} outcome rows", covariates.nrows()),
        });
    }
    let grid = match grid_path {
        Some(p) => {
            let g = io::read_real_matrix(p)?;
            if g.ncols() != 1 {
                return Err(Error::Format {
                    path: p.to_path_buf(),
                    line: 1,
                    msg: "grid file must have exactly one column".into(),
                });
            }
            g.iter().copied().collect()
        }
        None => (1..=t).map(|v| v as f64).collect(),
    };
    OrdinalFunctionalDataset::new(outcomes, covariates, grid, n_levels)
}

/// Writes the three CSV files read by [`load_dataset`].
pub fn write_dataset(
    data: &OrdinalFunctionalDataset,
    outcome_path: &Path,
    covariate_path: &Path,
    grid_path: &Path,
) -> Result<()> {
    let mut y = String::new();
    for i in 0..data.n_subjects() {
        let row: Vec<String> = (0..data.n_timepoints())
            .map(|t| data.outcomes[(i, t)].to_string())
            .collect();
        y.push_str(&row.join(","));
        y.push('\n');
    }
    io::write_atomic(outcome_path, y.as_bytes())?;
    io::write_real_matrix(covariate_path, &data.covariates)?;
    let grid = DMatrix::from_column_slice(data.n_timepoints(), 1, &data.time_grid);
    io::write_real_matrix(grid_path, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reads_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,1,2\n1,1,0\n");
        let x = write(dir.path(), "x.csv", "0.5\n-1.25\n");
        let d = load_dataset(&y, &x, None, None).unwrap();
        assert_eq!((d.n_subjects(), d.n_timepoints(), d.n_covariates(), d.n_levels()), (2, 3, 1, 3));
        assert_eq!(d.outcomes()[(0, 2)], 2);
        assert_eq!(d.time_grid(), &[1.0, 2.0, 3.0]);
        assert!(d.warnings().is_empty());
    }

    #[test]
    fn fractional_outcome_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,1.5\n");
        let x = write(dir.path(), "x.csv", "1\n");
        assert!(matches!(load_dataset(&y, &x, None, None), Err(Error::Format { .. })));
    }

    #[test]
    fn ragged_outcomes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,1\n1\n");
        let x = write(dir.path(), "x.csv", "1\n2\n");
        assert!(matches!(load_dataset(&y, &x, None, None), Err(Error::Format { .. })));
    }

    #[test]
    fn default_grid_for_365_days() {
        let dir = tempfile::tempdir().unwrap();
        let row: Vec<String> = (0..365).map(|t| (t % 2).to_string()).collect();
        let y = write(dir.path(), "y.csv", &format!("{}\n", row.join(",")));
        let x = write(dir.path(), "x.csv", "0.3\n");
        let d = load_dataset(&y, &x, None, None).unwrap();
        let expect: Vec<f64> = (1..=365).map(|v| v as f64).collect();
        assert_eq!(d.time_grid(), expect.as_slice());
    }

    #[test]
    fn level_gap_warns_but_keeps_max_plus_one() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,2\n2,0\n");
        let x = write(dir.path(), "x.csv", "1\n2\n");
        let d = load_dataset(&y, &x, None, None).unwrap();
        assert_eq!(d.n_levels(), 3);
        assert_eq!(d.warnings().len(), 1);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,1\n1,0\n");
        let x = write(dir.path(), "x.csv", "1\n");
        assert!(load_dataset(&y, &x, None, None).is_err());
    }

    #[test]
    fn explicit_grid_file() {
        let dir = tempfile::tempdir().unwrap();
        let y = write(dir.path(), "y.csv", "0,1,1\n");
        let x = write(dir.path(), "x.csv", "1\n");
        let g = write(dir.path(), "g.csv", "0.5\n0.75\n2\n");
        let d = load_dataset(&y, &x, Some(&g), None).unwrap();
        assert_eq!(d.time_grid(), &[0.5, 0.75, 2.0]);
        let bad = write(dir.path(), "bad.csv", "1\n1\n2\n");
        assert!(load_dataset(&y, &x, Some(&bad), None).is_err());
    }
}
