//! Storage and persistence of retained posterior draws.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::io;

pub const BETA_FILE: &str = "draws_beta.csv";
pub const CUTS_FILE: &str = "draws_cuts.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Retained draws of the data-scale coefficient curves and cut points.
///
/// Row `m` of `beta` holds draw `m` laid out covariate-major: entry
/// `p * T + t` is beta_p(t).
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    beta: DMatrix<f64>,
    cuts: DMatrix<f64>,
    n_covariates: usize,
    n_timepoints: usize,
    pub meta: ModelConfig,
}

impl PosteriorDraws {
    pub fn new(
        beta: DMatrix<f64>,
        cuts: DMatrix<f64>,
        n_covariates: usize,
        n_timepoints: usize,
        meta: ModelConfig,
    ) -> Result<Self> {
        if beta.ncols() != n_covariates * n_timepoints {
            return Err(Error::Dimension(format!(
                "beta draws have {} columns, expected {n_covariates}x{n_timepoints}",
                beta.ncols()
            )));
        }
        if beta.nrows() != cuts.nrows() {
            return Err(Error::Dimension("beta and cut draws disagree on draw count".into()));
        }
        for m in 0..cuts.nrows() {
            let row = cuts.row(m);
            if !row.is_empty() && row[0] != 0.0 {
                return Err(Error::CorruptState(format!("draw {m}: first cut point is {}", row[0])));
            }
            if row.iter().zip(row.iter().skip(1)).any(|(a, b)| b <= a) {
                return Err(Error::CorruptState(format!("draw {m}: cut points not increasing")));
            }
        }
        Ok(Self {
            beta,
            cuts,
            n_covariates,
            n_timepoints,
            meta,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_timepoints(&self) -> usize {
        self.n_timepoints
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn cuts(&self) -> &DMatrix<f64> {
        &self.cuts
    }

    /// M x T matrix of draws of beta_p(t).
    pub fn curve_draws(&self, p: usize) -> DMatrix<f64> {
        let t = self.n_timepoints;
        self.beta.columns(p * t, t).into_owned()
    }

    pub fn beta_at(&self, m: usize, p: usize, t: usize) -> f64 {
        self.beta[(m, p * self.n_timepoints + t)]
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_real_matrix(&dir.join(BETA_FILE), &self.beta)?;
        io::write_real_matrix(&dir.join(CUTS_FILE), &self.cuts)?;
        let meta = serde_json::json!({
            "config": self.meta,
            "n_covariates": self.n_covariates,
            "n_timepoints": self.n_timepoints,
        });
        io::write_atomic(&dir.join(CONFIG_FILE), serde_json::to_string_pretty(&meta)?.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let meta: serde_json::Value = serde_json::from_str(&text)?;
        let config: ModelConfig = serde_json::from_value(meta["config"].clone())?;
        let dim = |key: &str| {
            meta[key].as_u64().map(|v| v as usize).ok_or_else(|| Error::Format {
                path: cfg_path.clone(),
                line: 0,
                msg: format!("missing '{key}'"),
            })
        };
        let p = dim("n_covariates")?;
        let t = dim("n_timepoints")?;
        let beta = io::read_real_matrix(&dir.join(BETA_FILE))?;
        let cuts = io::read_real_matrix(&dir.join(CUTS_FILE))?;
        Self::new(beta, cuts, p, t, config)
    }
}
