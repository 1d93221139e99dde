//! Posterior summaries: point-wise and simultaneous credible bands,
//! estimation metrics and the cross-validation harness.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::OrdinalFunctionalDataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::latent::{predict_category, CutPoints};
use crate::rng::rng_stream;

/// Fewest draws accepted for a band.
pub const MIN_DRAWS: usize = 20;

/// Sample quantile with linear interpolation between order statistics
/// (position `prob * (n - 1)` in the sorted sample).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = prob.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn check_draws(draws: &DMatrix<f64>, alpha: f64) -> Result<()> {
    if draws.nrows() < MIN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "{} draws is too few for a band (need at least {MIN_DRAWS})",
            draws.nrows()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

fn sorted_column(draws: &DMatrix<f64>, t: usize) -> Vec<f64> {
    let mut col: Vec<f64> = draws.column(t).iter().copied().collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Per-column alpha/2 and 1 - alpha/2 quantiles of an M x T draw matrix.
pub fn pointwise_band(draws: &DMatrix<f64>, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_draws(draws, alpha)?;
    Ok((0..draws.ncols())
        .map(|t| {
            let col = sorted_column(draws, t);
            (quantile_sorted(&col, alpha / 2.0), quantile_sorted(&col, 1.0 - alpha / 2.0))
        })
        .unzip())
}

/// Posterior mean and standard deviation (M - 1 denominator) per column.
pub fn column_moments(draws: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let m = draws.nrows() as f64;
    (0..draws.ncols())
        .map(|t| {
            let col = draws.column(t);
            let mean = col.sum() / m;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean, (ss / (m - 1.0).max(1.0)).sqrt())
        })
        .unzip()
}

/// Whether a standard deviation is zero up to rounding relative to the mean.
fn degenerate(sd: f64, mean: f64) -> bool {
    !(sd > 1e-12 * mean.abs().max(1e-300))
}

/// Simultaneous band mean(t) +/- q * sd(t), with q the 1 - alpha quantile
/// of max_t |beta(t) - mean(t)| / sd(t) over draws. Columns with zero
/// spread are left out of the maximum and get a zero-width band. Returns
/// (lower, upper, q).
pub fn joint_band(draws: &DMatrix<f64>, alpha: f64) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_draws(draws, alpha)?;
    let (mean, sd) = column_moments(draws);
    let live: Vec<usize> = (0..draws.ncols()).filter(|&t| !degenerate(sd[t], mean[t])).collect();
    if live.is_empty() {
        return Err(Error::InvalidInput("every column of the draws is constant".into()));
    }
    let mut max_z: Vec<f64> = (0..draws.nrows())
        .map(|m| {
            live.iter()
                .map(|&t| ((draws[(m, t)] - mean[t]) / sd[t]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    max_z.sort_by(f64::total_cmp);
    let q = quantile_sorted(&max_z, 1.0 - alpha);
    let lower = mean.iter().zip(&sd).map(|(m, s)| m - q * s).collect();
    let upper = mean.iter().zip(&sd).map(|(m, s)| m + q * s).collect();
    Ok((lower, upper, q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleBand {
    pub center: Vec<f64>,
    pub pw_lower: Vec<f64>,
    pub pw_upper: Vec<f64>,
    pub joint_lower: Vec<f64>,
    pub joint_upper: Vec<f64>,
    pub alpha: f64,
    pub sig_pw: Vec<bool>,
    pub sig_joint: Vec<bool>,
    /// Quantile of the max statistic; 0 when every column is constant.
    pub joint_quantile: f64,
    /// Grid points where the joint band was widened to cover the
    /// point-wise band.
    pub joint_widened: usize,
}

fn excludes_zero(lo: f64, hi: f64) -> bool {
    lo > 0.0 || hi < 0.0
}

impl CredibleBand {
    /// Both bands from the same M x T draws. The joint band is widened
    /// wherever an asymmetric point-wise interval pokes out of it, so that
    /// it always contains the point-wise band.
    pub fn from_draws(draws: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        let (pw_lower, pw_upper) = pointwise_band(draws, alpha)?;
        let (center, _) = column_moments(draws);
        let (mut joint_lower, mut joint_upper, joint_quantile) = match joint_band(draws, alpha) {
            Ok(b) => b,
            Err(_) => (center.clone(), center.clone(), 0.0),
        };
        let mut joint_widened = 0;
        for t in 0..center.len() {
            let lo = joint_lower[t].min(pw_lower[t]).min(center[t]);
            let hi = joint_upper[t].max(pw_upper[t]).max(center[t]);
            if lo != joint_lower[t] || hi != joint_upper[t] {
                joint_widened += 1;
            }
            joint_lower[t] = lo;
            joint_upper[t] = hi;
        }
        let sig_pw = pw_lower.iter().zip(&pw_upper).map(|(l, h)| excludes_zero(*l, *h)).collect();
        let sig_joint = joint_lower.iter().zip(&joint_upper).map(|(l, h)| excludes_zero(*l, *h)).collect();
        Ok(CredibleBand {
            center,
            pw_lower,
            pw_upper,
            joint_lower,
            joint_upper,
            alpha,
            sig_pw,
            sig_joint,
            joint_quantile,
            joint_widened,
        })
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    /// Grid points where the joint band fails to contain the point-wise band
    /// or the centre, or where a joint flag is set without the point-wise one.
    pub fn structure_violations(&self) -> usize {
        (0..self.len())
            .filter(|&t| {
                self.joint_lower[t] > self.pw_lower[t]
                    || self.pw_upper[t] > self.joint_upper[t]
                    || !(self.joint_lower[t] <= self.center[t] && self.center[t] <= self.joint_upper[t])
                    || (self.sig_joint[t] && !self.sig_pw[t])
            })
            .count()
    }

    /// Plot-ready CSV with one row per grid point.
    pub fn to_csv(&self, grid: &[f64]) -> String {
        let mut out = String::from("t,center,pw_lo,pw_hi,joint_lo,joint_hi,sig_pw,sig_joint\n");
        for t in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                grid.get(t).copied().unwrap_or((t + 1) as f64),
                self.center[t],
                self.pw_lower[t],
                self.pw_upper[t],
                self.joint_lower[t],
                self.joint_upper[t],
                self.sig_pw[t] as u8,
                self.sig_joint[t] as u8
            );
        }
        out
    }
}

/// Mean over the grid of squared differences.
pub fn mise(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "estimate has {} points, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageMetrics {
    /// Share of grid points where the point-wise band holds the truth.
    pub pw_coverage: f64,
    /// Share of grid points where the joint band holds the truth.
    pub joint_coverage: f64,
    /// Whether the joint band holds the whole true curve.
    pub joint_covered: bool,
    pub pw_width: f64,
    pub joint_width: f64,
}

pub fn coverage_metrics(band: &CredibleBand, truth: &[f64]) -> CoverageMetrics {
    let n = band.len().min(truth.len());
    let inside = |lo: &[f64], hi: &[f64]| (0..n).filter(|&t| lo[t] <= truth[t] && truth[t] <= hi[t]).count();
    let pw_in = inside(&band.pw_lower, &band.pw_upper);
    let joint_in = inside(&band.joint_lower, &band.joint_upper);
    let width = |lo: &[f64], hi: &[f64]| (0..n).map(|t| hi[t] - lo[t]).sum::<f64>() / n as f64;
    CoverageMetrics {
        pw_coverage: pw_in as f64 / n as f64,
        joint_coverage: joint_in as f64 / n as f64,
        joint_covered: joint_in == n,
        pw_width: width(&band.pw_lower, &band.pw_upper),
        joint_width: width(&band.joint_lower, &band.joint_upper),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSummary {
    /// Cut index counted from 1; the first cut is fixed at zero.
    pub index: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub alpha: f64,
    pub n_draws: usize,
    pub model: String,
    pub bands: Vec<CredibleBand>,
    pub cuts: Vec<CutSummary>,
}

pub fn summarize(draws: &PosteriorDraws, alpha: f64) -> Result<PosteriorSummary> {
    let bands = (0..draws.n_covariates())
        .map(|p| CredibleBand::from_draws(&draws.curve_draws(p), alpha))
        .collect::<Result<Vec<_>>>()?;
    let cuts = (0..draws.cuts().ncols())
        .map(|k| {
            let col = sorted_column(draws.cuts(), k);
            CutSummary {
                index: k + 1,
                mean: col.iter().sum::<f64>() / col.len() as f64,
                lower: quantile_sorted(&col, alpha / 2.0),
                upper: quantile_sorted(&col, 1.0 - alpha / 2.0),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        alpha,
        n_draws: draws.n_draws(),
        model: draws.meta.label(),
        bands,
        cuts,
    })
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    alpha: f64,
    n_draws: usize,
    model: &'a str,
    cuts: &'a [CutSummary],
    covariates: Vec<CovariateSummary>,
}

#[derive(Serialize)]
struct CovariateSummary {
    covariate: usize,
    band_file: String,
    joint_quantile: f64,
    joint_widened: usize,
    n_sig_pw: usize,
    n_sig_joint: usize,
}

impl PosteriorSummary {
    /// Writes `band_x{p}.csv` per covariate (1-based) and `summary.json`.
    pub fn write(&self, dir: &Path, grid: &[f64]) -> Result<()> {
        let mut covariates = Vec::new();
        for (p, band) in self.bands.iter().enumerate() {
            let name = format!("band_x{}.csv", p + 1);
            write_atomic(&dir.join(&name), band.to_csv(grid).as_bytes())?;
            covariates.push(CovariateSummary {
                covariate: p + 1,
                band_file: name,
                joint_quantile: band.joint_quantile,
                joint_widened: band.joint_widened,
                n_sig_pw: band.sig_pw.iter().filter(|b| **b).count(),
                n_sig_joint: band.sig_joint.iter().filter(|b| **b).count(),
            });
        }
        let file = SummaryFile {
            alpha: self.alpha,
            n_draws: self.n_draws,
            model: &self.model,
            cuts: &self.cuts,
            covariates,
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        write_atomic(&dir.join("summary.json"), json.as_bytes())
    }
}

/// Share of outcomes predicted correctly by each retained draw, using the
/// most probable category under that draw's curves and cut points.
pub fn draw_accuracies(draws: &PosteriorDraws, holdout: &OrdinalFunctionalDataset) -> Result<Vec<f64>> {
    if holdout.n_covariates() != draws.n_covariates() || holdout.n_timepoints() != draws.n_timepoints() {
        return Err(Error::Dimension("holdout data does not match the fitted model".into()));
    }
    let (n, t_len, p_len) = (holdout.n_subjects(), holdout.n_timepoints(), holdout.n_covariates());
    let x = holdout.covariates();
    let y = holdout.outcomes();
    let total = (n * t_len) as f64;
    (0..draws.n_draws())
        .map(|m| {
            let cuts = CutPoints::new(draws.cuts().row(m).iter().copied().collect())?;
            let mut correct = 0usize;
            for i in 0..n {
                for t in 0..t_len {
                    let eta: f64 = (0..p_len).map(|p| x[(i, p)] * draws.beta_at(m, p, t)).sum();
                    if predict_category(eta, &cuts) == y[(i, t)] {
                        correct += 1;
                    }
                }
            }
            Ok(correct as f64 / total)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Subject indices held out in each fold.
    pub folds: Vec<Vec<usize>>,
    /// Median accuracy over draws, per fold.
    pub fold_accuracy: Vec<f64>,
    /// Median of the fold values.
    pub overall: f64,
}

/// Random partition of `n` subjects into `n_folds` groups of near-equal size.
pub fn assign_folds<R: Rng + ?Sized>(n: usize, n_folds: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if n_folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::InvalidInput(format!("{n_folds} folds for {n} subjects leaves a fold empty")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![Vec::new(); n_folds];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % n_folds].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// K-fold cross-validation over subjects. Folds are drawn from `rng`; the
/// chain of fold f is seeded from `config.seed` on stream f + 1. Folds are
/// fitted in parallel on the current rayon pool.
pub fn cross_validate<R: Rng + ?Sized>(
    data: &OrdinalFunctionalDataset,
    config: &ModelConfig,
    n_folds: usize,
    rng: &mut R,
) -> Result<CvResult> {
    let folds = assign_folds(data.n_subjects(), n_folds, rng)?;
    let fold_accuracy = folds
        .par_iter()
        .enumerate()
        .map(|(f, holdout)| {
            let train: Vec<usize> = (0..data.n_subjects()).filter(|i| holdout.binary_search(i).is_err()).collect();
            let train_data = data.subset(&train)?;
            let test_data = data.subset(holdout)?;
            let mut chain = rng_stream(config.seed, f as u64 + 1);
            let draws = crate::fit_with_rng(&train_data, config, &mut chain)?;
            Ok(median(&draw_accuracies(&draws, &test_data)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let overall = median(&fold_accuracy);
    Ok(CvResult {
        folds,
        fold_accuracy,
        overall,
    })
}
