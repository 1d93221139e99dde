//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad or unknown flags,
//! invalid settings), 2 when reading data or fitting fails.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::basis::spline::{bspline_design, ospline_design};
use crate::basis::wavelet::WaveletTransform;
use crate::config::{ModelConfig, Padding};
use crate::data::{load_dataset, write_dataset, OrdinalFunctionalDataset};
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::inference::{cross_validate, summarize, CvResult};
use crate::io::{write_atomic, write_real_matrix};
use crate::rng::rng_stream;
use crate::simulate::{
    data_rng, generate_dataset, run_study, CovStructure, CurveSetting, SimulationScenario, StudyTable,
};

#[derive(Parser, Debug)]
#[command(name = "opfrm", version, about = "Bayesian ordinal probit function-on-scalar regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate one synthetic dataset (y.csv, x.csv, grid.csv, truth.csv).
    Simulate(SimulateArgs),
    /// Fit a model and write draws, credible bands and a summary.
    Fit(FitArgs),
    /// Recompute bands and summary from saved draws in --out.
    Summarize(SummarizeArgs),
    /// K-fold cross-validated predictive accuracy.
    Cv(CvArgs),
    /// Replicate study over the six standard models.
    Study(StudyArgs),
    /// Write the design and penalty (splines) or transform matrix (wavelets).
    ExportBasis(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Bspline,
    Ospline,
    Symmlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Sigmoidal,
    Seasonal,
    Decay,
    Peak,
    Null,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Independent,
    Exponential,
    CompoundSymmetric,
}

impl From<SettingArg> for CurveSetting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Sigmoidal => CurveSetting::Sigmoidal,
            SettingArg::Seasonal => CurveSetting::Seasonal,
            SettingArg::Decay => CurveSetting::Decay,
            SettingArg::Peak => CurveSetting::Peak,
            SettingArg::Null => CurveSetting::Null,
        }
    }
}

impl From<CovArg> for CovStructure {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Independent => CovStructure::Independent,
            CovArg::Exponential => CovStructure::Exponential,
            CovArg::CompoundSymmetric => CovStructure::CompoundSymmetric,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Basis family.
    #[arg(long, value_enum, default_value_t = BasisArg::Ospline)]
    pub basis: BasisArg,
    /// B-spline basis functions or O-spline interior knots [default: 10 for bspline, 2 for ospline].
    #[arg(long)]
    pub k: Option<usize>,
    /// Wavelet decomposition levels J.
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    /// Number of functional principal components (spline models).
    #[arg(long, default_value_t = 2)]
    pub kp: usize,
    /// Ridge weight of the composite B-spline penalty.
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    /// Total MCMC iterations, burn-in included.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Burn-in iterations discarded.
    #[arg(long, default_value_t = 500)]
    pub burn: usize,
    /// Seed for every random stream.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn config(&self) -> Result<ModelConfig> {
        let config = match self.basis {
            BasisArg::Bspline => ModelConfig::bspline(self.k.unwrap_or(10)),
            BasisArg::Ospline => ModelConfig::ospline(self.k.unwrap_or(2)),
            BasisArg::Symmlet => ModelConfig::symmlet(self.levels),
        };
        let config = ModelConfig {
            n_fpc: self.kp,
            eta: self.eta,
            ..config
        }
        .with_samples(self.samples, self.burn)
        .with_seed(self.seed);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Outcome CSV: one row per subject, integer levels from 0.
    #[arg(long)]
    pub y: PathBuf,
    /// Covariate CSV: one row per subject.
    #[arg(long)]
    pub x: PathBuf,
    /// Optional one-column grid CSV [default: 1..T].
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<OrdinalFunctionalDataset> {
        load_dataset(&self.y, &self.x, self.grid.as_deref(), None)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SettingArg::Sigmoidal)]
    pub setting: SettingArg,
    #[arg(long, value_enum, default_value_t = CovArg::Exponential)]
    pub cov: CovArg,
    /// Subjects.
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    /// Time points.
    #[arg(long, default_value_t = 256)]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Band level: bands have 1 - alpha credibility.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Optional one-column grid CSV used for the t column [default: 1..T].
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Directory holding draws from `fit`; summaries are written there too.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    #[arg(long, value_enum, default_value_t = SettingArg::Sigmoidal)]
    pub setting: SettingArg,
    #[arg(long, value_enum, default_value_t = CovArg::Exponential)]
    pub cov: CovArg,
    #[arg(long, default_value_t = 40)]
    pub n: usize,
    #[arg(long, default_value_t = 256)]
    pub t: usize,
    /// Replicate datasets.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 500)]
    pub burn: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Functional principal components for the spline models.
    #[arg(long, default_value_t = 2)]
    pub kp: usize,
    /// Comma-separated model labels such as b5,o2,s6 (b: B-spline K,
    /// o: O-spline K, s: Symmlet J).
    #[arg(long, value_delimiter = ',', default_value = "b5,b10,o2,o4,s6,s8")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long, value_enum, default_value_t = BasisArg::Ospline)]
    pub basis: BasisArg,
    /// B-spline basis functions or O-spline interior knots [default: 10 for bspline, 2 for ospline].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    /// Grid length when no grid file is given.
    #[arg(long, default_value_t = 256)]
    pub t: usize,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Why a command stopped: bad usage (exit 1) or a runtime failure (exit 2).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn pool(jobs: usize) -> std::result::Result<rayon::ThreadPool, Failure> {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(Error::InvalidInput(e.to_string())))
}

fn check_alpha(alpha: f64) -> std::result::Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--alpha must lie in (0,1), got {alpha}")))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_grid(path: Option<&Path>, len: usize) -> Result<Vec<f64>> {
    match path {
        Some(p) => Ok(crate::io::read_real_matrix(p)?.iter().copied().collect()),
        None => Ok((1..=len).map(|v| v as f64).collect()),
    }
}

fn simulate(args: &SimulateArgs) -> std::result::Result<(), Failure> {
    let mut scenario = SimulationScenario::new(args.setting.into(), args.cov.into());
    scenario.n_subjects = args.n;
    scenario.n_timepoints = args.t;
    scenario.seed = args.seed;
    scenario.n_replicates = 1;
    scenario.validate().map_err(usage)?;
    let (data, truth) = generate_dataset(&scenario, &mut data_rng(&scenario, 0))?;
    let out = &args.out;
    write_dataset(&data, &out.join("y.csv"), &out.join("x.csv"), &out.join("grid.csv"))?;
    write_real_matrix(&out.join("truth.csv"), &DMatrix::from_column_slice(truth.len(), 1, &truth))?;
    write_json(&out.join("scenario.json"), &scenario)?;
    Ok(())
}

fn fit(args: &FitArgs) -> std::result::Result<(), Failure> {
    let config = args.model.config().map_err(usage)?;
    check_alpha(args.alpha)?;
    let data = args.data.load()?;
    for w in data.warnings() {
        eprintln!("warning: {w}");
    }
    let draws = crate::fit(&data, &config)?;
    draws.save(&args.out)?;
    summarize(&draws, args.alpha)?.write(&args.out, data.time_grid())?;
    Ok(())
}

fn summarize_cmd(args: &SummarizeArgs) -> std::result::Result<(), Failure> {
    check_alpha(args.alpha)?;
    let draws = PosteriorDraws::load(&args.out)?;
    let grid = read_grid(args.grid.as_deref(), draws.n_timepoints())?;
    summarize(&draws, args.alpha)?.write(&args.out, &grid)?;
    Ok(())
}

fn cv(args: &CvArgs) -> std::result::Result<(), Failure> {
    let config = args.model.config().map_err(usage)?;
    if args.folds < 2 {
        return Err(Failure::Usage(format!("--folds must be at least 2, got {}", args.folds)));
    }
    let pool = pool(args.jobs)?;
    let data = args.data.load()?;
    let mut rng = rng_stream(config.seed, 0);
    let result = pool.install(|| cross_validate(&data, &config, args.folds, &mut rng))?;
    write_cv(&result, &config, &args.out)?;
    Ok(())
}

/// Writes cv_accuracy.csv (one row per fold plus the overall median) and
/// cv.json.
pub fn write_cv(result: &CvResult, config: &ModelConfig, out: &Path) -> Result<()> {
    let mut csv = String::from("fold,n_holdout,accuracy\n");
    for (f, (acc, ids)) in result.fold_accuracy.iter().zip(&result.folds).enumerate() {
        csv.push_str(&format!("{},{},{}\n", f + 1, ids.len(), acc));
    }
    let n: usize = result.folds.iter().map(Vec::len).sum();
    csv.push_str(&format!("overall,{},{}\n", n, result.overall));
    write_atomic(&out.join("cv_accuracy.csv"), csv.as_bytes())?;
    write_json(
        &out.join("cv.json"),
        &serde_json::json!({ "model": config, "folds": result.folds, "fold_accuracy": result.fold_accuracy, "overall": result.overall }),
    )
}

/// Writes study_summary.csv, one wide table per headline metric,
/// replicates.csv and manifest.json.
pub fn write_study(table: &StudyTable, out: &Path) -> Result<()> {
    write_atomic(&out.join("study_summary.csv"), table.summary_csv().as_bytes())?;
    write_atomic(&out.join("table_mise.csv"), table.wide_csv(|s| s.mise).as_bytes())?;
    write_atomic(&out.join("table_pw_coverage.csv"), table.wide_csv(|s| s.pw_coverage).as_bytes())?;
    write_atomic(&out.join("table_joint_coverage.csv"), table.wide_csv(|s| s.joint_coverage).as_bytes())?;
    write_atomic(&out.join("replicates.csv"), table.replicates_csv().as_bytes())?;
    write_json(
        &out.join("manifest.json"),
        &serde_json::json!({
            "scenario": table.scenario,
            "models": table.models,
            "failures": table.failures,
            "failure_count": table.failures.len(),
        }),
    )
}

/// `b5` is a B-spline with K = 5, `o2` an O-spline with K = 2, `s6` a
/// Symmlet with J = 6.
pub fn parse_model(label: &str) -> std::result::Result<ModelConfig, Failure> {
    let bad = || Failure::Usage(format!("--models: cannot read model label '{label}'"));
    let label = label.trim();
    let mut chars = label.chars();
    let kind = chars.next().ok_or_else(bad)?;
    let size: usize = chars.as_str().parse().map_err(|_| bad())?;
    match kind.to_ascii_lowercase() {
        'b' => Ok(ModelConfig::bspline(size)),
        'o' => Ok(ModelConfig::ospline(size)),
        's' => Ok(ModelConfig::symmlet(size)),
        _ => Err(bad()),
    }
}

fn study(args: &StudyArgs) -> std::result::Result<(), Failure> {
    let mut scenario = SimulationScenario::new(args.setting.into(), args.cov.into());
    scenario.n_subjects = args.n;
    scenario.n_timepoints = args.t;
    scenario.n_replicates = args.reps;
    scenario.seed = args.seed;
    scenario.validate().map_err(usage)?;
    let models = args
        .models
        .iter()
        .map(|label| {
            parse_model(label).map(|c| ModelConfig { n_fpc: args.kp, ..c }.with_samples(args.samples, args.burn).with_seed(args.seed))
        })
        .collect::<std::result::Result<Vec<_>, Failure>>()?;
    for m in &models {
        m.validate().map_err(usage)?;
    }
    let pool = pool(args.jobs)?;
    let table = pool.install(|| run_study(&scenario, &models))?;
    write_study(&table, &args.out)?;
    if !table.failures.is_empty() {
        eprintln!("warning: {} fits failed; see manifest.json", table.failures.len());
    }
    Ok(())
}

fn export_basis(args: &ExportArgs) -> std::result::Result<(), Failure> {
    let grid = read_grid(args.grid.as_deref(), args.t)?;
    match args.basis {
        BasisArg::Bspline | BasisArg::Ospline => {
            let basis = if args.basis == BasisArg::Bspline {
                bspline_design(&grid, args.k.unwrap_or(10), args.eta)
            } else {
                ospline_design(&grid, args.k.unwrap_or(2))
            }
            .map_err(usage)?;
            write_real_matrix(&args.out.join("design.csv"), &basis.design)?;
            write_real_matrix(&args.out.join("penalty.csv"), &basis.penalty)?;
            let knots = DMatrix::from_column_slice(basis.knots.len(), 1, &basis.knots);
            write_real_matrix(&args.out.join("knots.csv"), &knots)?;
        }
        BasisArg::Symmlet => {
            let wt = WaveletTransform::symmlet(8, args.levels, Padding::SymmetricHalfpoint, grid.len()).map_err(usage)?;
            write_real_matrix(&args.out.join("dwt.csv"), &wt.matrix()?)?;
            let mut map = String::from("scale,location\n");
            for (j, k) in wt.index_map() {
                map.push_str(&format!("{j},{k}\n"));
            }
            write_atomic(&args.out.join("dwt_index.csv"), map.as_bytes())?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Cv(a) => cv(a),
        Command::Study(a) => study(a),
        Command::ExportBasis(a) => export_basis(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
