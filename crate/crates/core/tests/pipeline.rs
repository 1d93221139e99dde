use std::process::Command;

use opfrm::inference::{coverage_metrics, draw_accuracies, summarize, CredibleBand};
use opfrm::simulate::{data_rng, generate_dataset, CovStructure, CurveSetting, SimulationScenario};
use opfrm::{fit, load_dataset, write_dataset, ModelConfig, PosteriorDraws};

fn small_scenario(setting: CurveSetting) -> SimulationScenario {
    let mut s = SimulationScenario::new(setting, CovStructure::Exponential);
    s.n_subjects = 20;
    s.n_timepoints = 32;
    s.n_replicates = 1;
    s.seed = 4;
    s
}

fn quick(config: ModelConfig) -> ModelConfig {
    config.with_samples(300, 150).with_seed(17)
}

#[test]
fn every_basis_fits_and_is_reproducible() {
    let sc = small_scenario(CurveSetting::Sigmoidal);
    let (data, truth) = generate_dataset(&sc, &mut data_rng(&sc, 0)).unwrap();
    for config in [quick(ModelConfig::bspline(6)), quick(ModelConfig::ospline(2)), quick(ModelConfig::symmlet(3))] {
        let a = fit(&data, &config).unwrap();
        let b = fit(&data, &config).unwrap();
        assert_eq!(a.beta(), b.beta(), "{}", config.label());
        assert_eq!(a.cuts(), b.cuts());
        assert_eq!((a.n_draws(), a.n_covariates(), a.n_timepoints()), (150, 1, 32));
        // Cuts stay ordered with the first pinned at zero.
        for m in 0..a.n_draws() {
            let row = a.cuts().row(m);
            assert_eq!(row[0], 0.0);
            assert!(row.iter().zip(row.iter().skip(1)).all(|(x, y)| x < y));
        }
        let band = CredibleBand::from_draws(&a.curve_draws(0), 0.05).unwrap();
        assert_eq!(band.structure_violations(), 0);
        // Even a short chain tracks the rising curve.
        let metrics = coverage_metrics(&band, &truth);
        assert!(metrics.joint_coverage > 0.5, "{}: {:?}", config.label(), metrics);
        let acc = draw_accuracies(&a, &data).unwrap();
        assert!(acc.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn draws_and_data_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let sc = small_scenario(CurveSetting::Seasonal);
    let (data, _) = generate_dataset(&sc, &mut data_rng(&sc, 0)).unwrap();
    let (y, x, g) = (dir.path().join("y.csv"), dir.path().join("x.csv"), dir.path().join("g.csv"));
    write_dataset(&data, &y, &x, &g).unwrap();
    let back = load_dataset(&y, &x, Some(&g), Some(4)).unwrap();
    assert_eq!(back.outcomes(), data.outcomes());
    assert_eq!(back.covariates(), data.covariates());
    assert_eq!(back.time_grid(), data.time_grid());

    let draws = fit(&back, &quick(ModelConfig::ospline(2))).unwrap();
    draws.save(dir.path()).unwrap();
    let loaded = PosteriorDraws::load(dir.path()).unwrap();
    assert_eq!(loaded.beta(), draws.beta());
    assert_eq!(loaded.meta, draws.meta);
    summarize(&loaded, 0.05).unwrap().write(dir.path(), back.time_grid()).unwrap();
    let band = std::fs::read_to_string(dir.path().join("band_x1.csv")).unwrap();
    assert!(band.starts_with("t,center,pw_lo,pw_hi,joint_lo,joint_hi,sig_pw,sig_joint"));
    assert_eq!(band.lines().count(), 33);
}

fn opfrm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opfrm"))
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let sim = d("sim");
    let status = opfrm()
        .args(["simulate", "--setting", "peak", "--n", "18", "--t", "32", "--seed", "3", "--out"])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["y.csv", "x.csv", "grid.csv", "truth.csv", "scenario.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    let fit_dir = d("fit");
    let out = opfrm()
        .args(["fit", "--basis", "symmlet", "--levels", "3", "--samples", "200", "--burn", "100"])
        .arg("--y")
        .arg(sim.join("y.csv"))
        .arg("--x")
        .arg(sim.join("x.csv"))
        .arg("--out")
        .arg(&fit_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["draws_beta.csv", "draws_cuts.csv", "config.json", "band_x1.csv", "summary.json"] {
        assert!(fit_dir.join(f).exists(), "{f}");
    }
    let before = std::fs::read(fit_dir.join("band_x1.csv")).unwrap();
    let status = opfrm().args(["summarize", "--alpha", "0.1", "--out"]).arg(&fit_dir).status().unwrap();
    assert!(status.success());
    assert_ne!(std::fs::read(fit_dir.join("band_x1.csv")).unwrap(), before);

    let cv_dir = d("cv");
    let status = opfrm()
        .args(["cv", "--basis", "ospline", "--samples", "120", "--burn", "60", "--folds", "3"])
        .arg("--y")
        .arg(sim.join("y.csv"))
        .arg("--x")
        .arg(sim.join("x.csv"))
        .arg("--out")
        .arg(&cv_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let cv = std::fs::read_to_string(cv_dir.join("cv_accuracy.csv")).unwrap();
    assert_eq!(cv.lines().count(), 5);

    let study_dir = d("study");
    let status = opfrm()
        .args(["study", "--models", "o2,s3", "--n", "12", "--t", "32", "--reps", "2", "--samples", "100", "--burn", "50", "--out"])
        .arg(&study_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(study_dir.join("study_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(study_dir.join("manifest.json").exists());

    let basis_dir = d("basis");
    let status = opfrm()
        .args(["export-basis", "--basis", "bspline", "--k", "8", "--t", "40", "--out"])
        .arg(&basis_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let design = std::fs::read_to_string(basis_dir.join("design.csv")).unwrap();
    assert_eq!(design.lines().count(), 40);
    assert_eq!(design.lines().next().unwrap().split(',').count(), 8);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = opfrm()
        .args(["fit", "--basis", "bspline", "--k", "0", "--y", "a.csv", "--x", "b.csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));

    let out = opfrm().args(["fit", "--unknown"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = opfrm().args(["fit", "--y", "missing.csv", "--x", "missing.csv", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let help = opfrm().args(["fit", "--help"]).output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("[default: 1000]") && text.contains("[default: 0.05]"));
}
