//! Synthetic ordinal functional data and replicate studies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::OrdinalFunctionalDataset;
use crate::error::{Error, Result};
use crate::inference::{coverage_metrics, mise, CoverageMetrics, CredibleBand};
use crate::latent::CutPoints;
use crate::rng::{rng_stream, ChainRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSetting {
    Sigmoidal,
    Seasonal,
    Decay,
    Peak,
    /// Identically zero coefficient.
    Null,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovStructure {
    Independent,
    Exponential,
    CompoundSymmetric,
}

impl fmt::Display for CurveSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveSetting::Sigmoidal => "sigmoidal",
            CurveSetting::Seasonal => "seasonal",
            CurveSetting::Decay => "decay",
            CurveSetting::Peak => "peak",
            CurveSetting::Null => "null",
        })
    }
}

impl FromStr for CurveSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoidal" => Ok(CurveSetting::Sigmoidal),
            "seasonal" => Ok(CurveSetting::Seasonal),
            "decay" => Ok(CurveSetting::Decay),
            "peak" => Ok(CurveSetting::Peak),
            "null" => Ok(CurveSetting::Null),
            _ => Err(Error::InvalidInput(format!("unknown curve setting '{s}'"))),
        }
    }
}

impl fmt::Display for CovStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovStructure::Independent => "independent",
            CovStructure::Exponential => "exponential",
            CovStructure::CompoundSymmetric => "compound_symmetric",
        })
    }
}

impl FromStr for CovStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(CovStructure::Independent),
            "exponential" => Ok(CovStructure::Exponential),
            "compound_symmetric" | "cs" => Ok(CovStructure::CompoundSymmetric),
            _ => Err(Error::InvalidInput(format!("unknown covariance structure '{s}'"))),
        }
    }
}

impl CovStructure {
    pub fn default_rho(self) -> f64 {
        match self {
            CovStructure::Independent => 0.0,
            CovStructure::Exponential => 0.5,
            CovStructure::CompoundSymmetric => 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub setting: CurveSetting,
    pub cov_structure: CovStructure,
    pub n_subjects: usize,
    pub n_timepoints: usize,
    pub n_levels: usize,
    pub cut_truth: Vec<f64>,
    pub rho: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

impl SimulationScenario {
    /// 40 subjects, 256 time points, four levels with cuts (0, 0.8, 1.6),
    /// 200 replicates.
    pub fn new(setting: CurveSetting, cov_structure: CovStructure) -> Self {
        SimulationScenario {
            setting,
            cov_structure,
            n_subjects: 40,
            n_timepoints: 256,
            n_levels: 4,
            cut_truth: vec![0.0, 0.8, 1.6],
            rho: cov_structure.default_rho(),
            n_replicates: 200,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        CutPoints::new(self.cut_truth.clone())?;
        if self.cut_truth.len() + 1 != self.n_levels {
            return Err(Error::InvalidInput(format!(
                "{} cut points for {} levels",
                self.cut_truth.len(),
                self.n_levels
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidInput(format!("rho must lie in [0,1), got {}", self.rho)));
        }
        if self.n_subjects < 2 || self.n_timepoints == 0 || self.n_replicates == 0 {
            return Err(Error::InvalidInput("scenario needs subjects, time points and replicates".into()));
        }
        Ok(())
    }

    /// The [0,1] grid the true curve is evaluated on.
    pub fn unit_grid(&self) -> Vec<f64> {
        unit_grid(self.n_timepoints)
    }

    pub fn truth(&self) -> Vec<f64> {
        true_curve(self.setting, &self.unit_grid())
    }
}

/// T equally spaced points from 0 to 1.
pub fn unit_grid(t: usize) -> Vec<f64> {
    if t == 1 {
        return vec![0.5];
    }
    (0..t).map(|j| j as f64 / (t - 1) as f64).collect()
}

/// True coefficient curve on a grid rescaled to [0,1].
pub fn true_curve(setting: CurveSetting, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&s| match setting {
            CurveSetting::Sigmoidal => 1.0 / (1.0 + (-10.0 * (s - 0.5)).exp()),
            CurveSetting::Seasonal => 0.8 * (2.0 * std::f64::consts::PI * s).sin(),
            CurveSetting::Decay => (-3.0 * s).exp(),
            CurveSetting::Peak => (-(s - 0.5).powi(2) / (2.0 * 0.1 * 0.1)).exp(),
            CurveSetting::Null => 0.0,
        })
        .collect()
}

/// One unit-variance error curve of length `t`.
pub fn latent_error_draw<R: Rng + ?Sized>(cov: CovStructure, rho: f64, t: usize, rng: &mut R) -> Vec<f64> {
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    match cov {
        CovStructure::Independent => (0..t).map(|_| z()).collect(),
        CovStructure::Exponential => {
            let innovation = (1.0 - rho * rho).sqrt();
            let mut out = Vec::with_capacity(t);
            let mut prev = z();
            out.push(prev);
            for _ in 1..t {
                prev = rho * prev + innovation * z();
                out.push(prev);
            }
            out
        }
        CovStructure::CompoundSymmetric => {
            let shared = rho.sqrt() * z();
            let own = (1.0 - rho).sqrt();
            (0..t).map(|_| shared + own * z()).collect()
        }
    }
}

/// Level of a latent value under the given cuts (levels counted from 0).
fn threshold(value: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|c| value > **c).count()
}

/// One dataset: x_i ~ N(0,1), Y*_i(t) = x_i beta(t) + e_i(t), thresholded at
/// the true cuts. The dataset grid is 1..T. Returns the data and the true
/// curve.
pub fn generate_dataset<R: Rng + ?Sized>(
    scenario: &SimulationScenario,
    rng: &mut R,
) -> Result<(OrdinalFunctionalDataset, Vec<f64>)> {
    scenario.validate()?;
    let (n, t) = (scenario.n_subjects, scenario.n_timepoints);
    let truth = scenario.truth();
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = DMatrix::zeros(n, t);
    for (i, xi) in x.iter().enumerate() {
        let e = latent_error_draw(scenario.cov_structure, scenario.rho, t, rng);
        for j in 0..t {
            y[(i, j)] = threshold(xi * truth[j] + e[j], &scenario.cut_truth);
        }
    }
    let grid = (1..=t).map(|v| v as f64).collect();
    let data = OrdinalFunctionalDataset::new(y, DMatrix::from_vec(n, 1, x), grid, Some(scenario.n_levels))?;
    Ok((data, truth))
}

/// Stream of the data generator for replicate `r`.
pub fn data_rng(scenario: &SimulationScenario, r: usize) -> ChainRng {
    rng_stream(scenario.seed, 2 * r as u64)
}

/// Stream of model `m`'s chain on replicate `r`.
pub fn chain_rng(scenario: &SimulationScenario, config: &ModelConfig, r: usize, m: usize) -> ChainRng {
    let seed = scenario.seed ^ config.seed.rotate_left(32);
    rng_stream(seed, ((r as u64) << 16) | (2 * m as u64 + 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub model: String,
    pub mise: f64,
    pub coverage: CoverageMetrics,
    pub structure_violations: usize,
    pub joint_widened: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mise: f64,
    pub pw_coverage: f64,
    pub joint_coverage: f64,
    /// Share of replicates whose joint band holds the whole true curve.
    pub joint_covered: f64,
    pub pw_width: f64,
    pub joint_width: f64,
    pub structure_violations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyTable {
    pub scenario: SimulationScenario,
    pub models: Vec<ModelConfig>,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<ModelSummary>,
    /// (replicate, model, message) for every failed fit.
    pub failures: Vec<(usize, String, String)>,
}

fn evaluate(data: &OrdinalFunctionalDataset, truth: &[f64], config: &ModelConfig, rng: &mut ChainRng) -> Result<(f64, CredibleBand)> {
    let draws = crate::fit_with_rng(data, config, rng)?;
    let band = CredibleBand::from_draws(&draws.curve_draws(0), 0.05)?;
    Ok((mise(&band.center, truth)?, band))
}

/// A replicate record or (replicate, model, message) for a failed fit.
type Outcome = std::result::Result<ReplicateRecord, (usize, String, String)>;

/// Fits every model to every replicate in parallel on the current rayon
/// pool. Failed fits are counted and listed, never dropped silently.
pub fn run_study(scenario: &SimulationScenario, models: &[ModelConfig]) -> Result<StudyTable> {
    scenario.validate()?;
    for m in models {
        m.validate()?;
    }
    let per_rep: Vec<Vec<Outcome>> = (0..scenario.n_replicates)
        .into_par_iter()
        .map(|r| {
            let generated = generate_dataset(scenario, &mut data_rng(scenario, r));
            models
                .iter()
                .enumerate()
                .map(|(mi, config)| {
                    let label = config.label();
                    let (data, truth) = generated.as_ref().map_err(|e| (r, label.clone(), e.to_string()))?;
                    let (err, band) = evaluate(data, truth, config, &mut chain_rng(scenario, config, r, mi))
                        .map_err(|e| (r, label.clone(), e.to_string()))?;
                    Ok(ReplicateRecord {
                        replicate: r,
                        model: label,
                        mise: err,
                        coverage: coverage_metrics(&band, truth),
                        structure_violations: band.structure_violations(),
                        joint_widened: band.joint_widened,
                    })
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for item in per_rep.into_iter().flatten() {
        match item {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let summaries = models
        .iter()
        .map(|config| {
            let label = config.label();
            let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.model == label).collect();
            let k = recs.len().max(1) as f64;
            let avg = |f: &dyn Fn(&ReplicateRecord) -> f64| recs.iter().map(|r| f(r)).sum::<f64>() / k;
            ModelSummary {
                n_ok: recs.len(),
                n_failed: failures.iter().filter(|f| f.1 == label).count(),
                mise: avg(&|r| r.mise),
                pw_coverage: avg(&|r| r.coverage.pw_coverage),
                joint_coverage: avg(&|r| r.coverage.joint_coverage),
                joint_covered: avg(&|r| r.coverage.joint_covered as u8 as f64),
                pw_width: avg(&|r| r.coverage.pw_width),
                joint_width: avg(&|r| r.coverage.joint_width),
                structure_violations: recs.iter().map(|r| r.structure_violations).sum(),
                model: label,
            }
        })
        .collect();
    Ok(StudyTable {
        scenario: scenario.clone(),
        models: models.to_vec(),
        records,
        summaries,
        failures,
    })
}

/// The six models compared in the study: B-splines with K = 5, 10,
/// O-splines with K = 2, 4 and Symmlets with J = 6, 8.
pub fn standard_models(n_samples: usize, n_burn: usize, seed: u64) -> Vec<ModelConfig> {
    [
        ModelConfig::bspline(5),
        ModelConfig::bspline(10),
        ModelConfig::ospline(2),
        ModelConfig::ospline(4),
        ModelConfig::symmlet(6),
        ModelConfig::symmlet(8),
    ]
    .into_iter()
    .map(|c| c.with_samples(n_samples, n_burn).with_seed(seed))
    .collect()
}

impl StudyTable {
    /// Long table: one row per model with averaged metrics.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "setting,cov,model,n_ok,n_failed,mise,pw_coverage,joint_coverage,joint_covered,pw_width,joint_width\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.scenario.setting,
                self.scenario.cov_structure,
                s.model,
                s.n_ok,
                s.n_failed,
                s.mise,
                s.pw_coverage,
                s.joint_coverage,
                s.joint_covered,
                s.pw_width,
                s.joint_width
            ));
        }
        out
    }

    /// Wide table of one metric: a (setting, cov) row with one column per model.
    pub fn wide_csv(&self, metric: fn(&ModelSummary) -> f64) -> String {
        let mut out = String::from("setting,cov");
        for s in &self.summaries {
            out.push(',');
            out.push_str(&s.model);
        }
        out.push_str(&format!("\n{},{}", self.scenario.setting, self.scenario.cov_structure));
        for s in &self.summaries {
            out.push_str(&format!(",{}", metric(s)));
        }
        out.push('\n');
        out
    }

    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("replicate,model,mise,pw_coverage,joint_coverage,joint_covered,pw_width,joint_width\n");
        for r in &self.records {
            let c = &r.coverage;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.replicate, r.model, r.mise, c.pw_coverage, c.joint_coverage, c.joint_covered as u8, c.pw_width, c.joint_width
            ));
        }
        out
    }
}
