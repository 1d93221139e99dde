//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Set ACCEPTANCE_ONLY=1,4,... to run a subset while iterating.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use opfrm::basis::spline::ospline_design;
use opfrm::basis::wavelet::WaveletTransform;
use opfrm::cli::{write_cv, write_study};
use opfrm::inference::cross_validate;
use opfrm::latent::{category_probabilities, norm_cdf, norm_sf, rtruncnorm, CutPoints};
use opfrm::sampler_spline::{
    sample_beta_e, sample_beta_s, sample_scores, sample_variances, SplineChainState, SplineHyper, SplineModel,
};
use opfrm::sampler_wavelet::{inclusion_probability, wavelet_transform_for};
use opfrm::simulate::{
    latent_error_draw, run_study, true_curve, unit_grid, CovStructure, CurveSetting, SimulationScenario, StudyTable,
};
use opfrm::{rng_stream, ModelConfig, OrdinalFunctionalDataset, Padding};

const SAMPLES: usize = 1000;
const BURN: usize = 500;

struct Gate {
    only: Option<Vec<usize>>,
    failed: Vec<usize>,
}

impl Gate {
    fn wants(&self, n: usize) -> bool {
        self.only.as_ref().is_none_or(|v| v.contains(&n))
    }

    fn record(&mut self, n: usize, ok: bool, started: Instant, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {verdict} [{:.1}s] {detail}", started.elapsed().as_secs_f64());
        if !ok {
            self.failed.push(n);
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let n = if points.is_multiple_of(2) { points - 1 } else { points } - 1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// d-th derivative of the order-k B-spline B_i by the Cox-de Boor
/// recursion, written independently of the library's evaluator.
fn bspline_deriv(knots: &[f64], i: usize, k: usize, d: usize, x: f64) -> f64 {
    if d == 0 {
        return bspline_value(knots, i, k, x);
    }
    let left = knots[i + k - 1] - knots[i];
    let right = knots[i + k] - knots[i + 1];
    let mut out = 0.0;
    if left > 0.0 {
        out += bspline_deriv(knots, i, k - 1, d - 1, x) / left;
    }
    if right > 0.0 {
        out -= bspline_deriv(knots, i + 1, k - 1, d - 1, x) / right;
    }
    (k - 1) as f64 * out
}

fn bspline_value(knots: &[f64], i: usize, k: usize, x: f64) -> f64 {
    if k == 1 {
        let last = *knots.last().unwrap();
        let inside = knots[i] <= x && x < knots[i + 1];
        let at_end = x == last && knots[i] < knots[i + 1] && knots[i + 1] == last;
        return if inside || at_end { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let left = knots[i + k - 1] - knots[i];
    let right = knots[i + k] - knots[i + 1];
    if left > 0.0 {
        out += (x - knots[i]) / left * bspline_value(knots, i, k - 1, x);
    }
    if right > 0.0 {
        out += (knots[i + k] - x) / right * bspline_value(knots, i + 1, k - 1, x);
    }
    out
}

fn criterion_1(gate: &mut Gate) {
    let started = Instant::now();
    let mut rng = rng_stream(101, 0);
    let timer = Instant::now();
    let wt = wavelet_transform_for(&ModelConfig::symmlet(6), 256).unwrap();
    let mut roundtrip: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..256).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let back = wt.inverse(&wt.forward(&x).unwrap()).unwrap();
        roundtrip = x.iter().zip(&back).fold(roundtrip, |m, (a, b)| m.max((a - b).abs()));
    }
    let roundtrip_secs = timer.elapsed().as_secs_f64();

    let w = WaveletTransform::symmlet(8, 3, Padding::Periodic, 64).unwrap().matrix().unwrap();
    let orth = (&w * w.transpose() - DMatrix::identity(64, 64)).amax();

    let grid: Vec<f64> = (1..=256).map(|v| v as f64).collect();
    let mut penalty_err: f64 = 0.0;
    for k in [2, 4] {
        let basis = ospline_design(&grid, k).unwrap();
        let knots = &basis.knots;
        let n = basis.n_basis();
        let (a, b) = (knots[0], *knots.last().unwrap());
        let mut oracle = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = simpson(
                    |x| bspline_deriv(knots, i, 4, 2, x) * bspline_deriv(knots, j, 4, 2, x),
                    a,
                    b,
                    100_001,
                );
                oracle[(i, j)] = v;
                oracle[(j, i)] = v;
            }
        }
        penalty_err = penalty_err.max((&basis.penalty - &oracle).amax() / oracle.amax());
    }
    let ok = roundtrip < 1e-10 && roundtrip_secs < 1.0 && orth < 1e-8 && penalty_err < 1e-6;
    gate.record(
        1,
        ok,
        started,
        format!(
            "DWT roundtrip {roundtrip:.2e} (<1e-10) in {roundtrip_secs:.3}s (<1s); periodic |WW'-I| {orth:.2e} (<1e-8); \
             O-spline penalty rel err {penalty_err:.2e} (<1e-6)"
        ),
    );
}

struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            n: 0,
        }
    }

    fn push(&mut self, v: &[f64]) {
        for (i, x) in v.iter().enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
        self.n += 1;
    }

    /// Count of coordinates whose mean or variance lies beyond three Monte
    /// Carlo standard errors of a Gaussian with the given moments, and the
    /// largest standardized deviation.
    fn gaussian_misses(&self, mean: &[f64], var: &[f64]) -> (usize, f64) {
        let n = self.n as f64;
        let mut misses = 0;
        let mut worst: f64 = 0.0;
        for i in 0..mean.len() {
            let m = self.sum[i] / n;
            let v = self.sum_sq[i] / n - m * m;
            let zm = (m - mean[i]).abs() / (var[i] / n).sqrt();
            let zv = (v - var[i]).abs() / (var[i] * (2.0 / n).sqrt());
            worst = worst.max(zm).max(zv);
            misses += (zm > 3.0) as usize + (zv > 3.0) as usize;
        }
        (misses, worst)
    }
}

/// Moments of N(Q^-1 b, Q^-1).
fn gaussian_oracle(prec: &DMatrix<f64>, rhs: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let cov = prec.clone().try_inverse().unwrap();
    let mean = &cov * rhs;
    (mean.iter().copied().collect(), cov.diagonal().iter().copied().collect())
}

/// Dense regression form of a coefficient block: the latent value at
/// (i, t) loads on coefficient (q, k) through w[(i, q)] * theta[(t, k)].
fn block_oracle(
    w: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    resid: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    lambda: &[f64],
    sigma2: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (n, q) = w.shape();
    let (t_len, k) = theta.shape();
    let mut z = DMatrix::zeros(n * t_len, q * k);
    let mut r = DVector::zeros(n * t_len);
    for i in 0..n {
        for t in 0..t_len {
            for a in 0..q {
                for b in 0..k {
                    z[(i * t_len + t, a * k + b)] = w[(i, a)] * theta[(t, b)];
                }
            }
            r[i * t_len + t] = resid[(i, t)];
        }
    }
    let mut prec = z.transpose() * &z / sigma2;
    for a in 0..q {
        for b in 0..k {
            for c in 0..k {
                prec[(a * k + b, a * k + c)] += penalty[(b, c)] / lambda[a];
            }
        }
    }
    gaussian_oracle(&prec, &(z.transpose() * r / sigma2))
}

fn criterion_2(gate: &mut Gate) {
    let started = Instant::now();
    const DRAWS: usize = 100_000;
    let (n, t_len, kp) = (5, 8, 2);
    let grid: Vec<f64> = (1..=t_len).map(|v| v as f64).collect();
    let basis = ospline_design(&grid, 3).unwrap();
    let k = basis.n_basis();
    let mut rng = rng_stream(202, 0);
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { [0.3, -1.2, 0.8, 1.5, -0.4][i] });
    let y = normal(n, t_len);
    let frozen = SplineChainState {
        beta_s: normal(k, 2) * 0.5,
        beta_e: normal(k, kp) * 0.5,
        scores: normal(n, kp),
        sigma_e2: 0.7,
        lambda_s: vec![0.5, 2.0],
        lambda_e: vec![1.5, 0.8],
        hyper: SplineHyper {
            a_sigma: 1.0,
            b_sigma: 1.0,
            a_s: 3.5,
            b_s: vec![1.0, 2.0],
            a_e: 1.0,
            b_e: 1.0,
        },
    };
    let model = SplineModel::new(basis.clone(), x.clone());
    let theta = &basis.design;
    let delta = &basis.penalty;
    let fixed = &x * (theta * &frozen.beta_s).transpose();
    let fpc = &frozen.scores * (theta * &frozen.beta_e).transpose();

    let (ms, vs) = block_oracle(&x, theta, &(&y - &fpc), delta, &frozen.lambda_s, frozen.sigma_e2);
    let (me, ve) = block_oracle(&frozen.scores, theta, &(&y - &fixed), delta, &frozen.lambda_e, frozen.sigma_e2);
    // Score rows are independent: N(Q^-1 b_i, Q^-1) with Q = Phi'Phi/sigma2 + I.
    let phi = theta * &frozen.beta_e;
    let q_scores = phi.transpose() * &phi / frozen.sigma_e2 + DMatrix::identity(kp, kp);
    let (mut mc, mut vc) = (vec![0.0; n * kp], vec![0.0; n * kp]);
    for i in 0..n {
        let rhs = phi.transpose() * (y.row(i) - fixed.row(i)).transpose() / frozen.sigma_e2;
        let (m, v) = gaussian_oracle(&q_scores, &rhs);
        for c in 0..kp {
            mc[c * n + i] = m[c];
            vc[c * n + i] = v[c];
        }
    }
    // Inverse-gamma moments; the O-spline penalty has a two-dimensional
    // null space (constants and lines).
    let resid = &y - &fixed - &fpc;
    let half_rank = (k - 2) as f64 / 2.0;
    let h = &frozen.hyper;
    let quad = |b: &DMatrix<f64>, c: usize| {
        let v = b.column(c).into_owned();
        v.dot(&(delta * &v))
    };
    let mut ig = vec![(h.a_sigma + (n * t_len) as f64 / 2.0, h.b_sigma + 0.5 * resid.norm_squared())];
    for p in 0..2 {
        ig.push((h.a_s + half_rank, h.b_s[p] + 0.5 * quad(&frozen.beta_s, p)));
    }
    for c in 0..kp {
        ig.push((h.a_e + half_rank, h.b_e + 0.5 * quad(&frozen.beta_e, c)));
    }

    let mut acc_s = Moments::new(k * 2);
    let mut acc_e = Moments::new(k * kp);
    let mut acc_c = Moments::new(n * kp);
    let mut acc_v = Moments::new(ig.len());
    let mut chain = rng_stream(203, 0);
    let mut state = frozen.clone();
    for _ in 0..DRAWS {
        sample_beta_s(&mut state, &model, &y, &mut chain).unwrap();
        acc_s.push(state.beta_s.as_slice());
        state.beta_s.copy_from(&frozen.beta_s);
        sample_beta_e(&mut state, &model, &y, &mut chain).unwrap();
        acc_e.push(state.beta_e.as_slice());
        state.beta_e.copy_from(&frozen.beta_e);
        sample_scores(&mut state, &model, &y, &mut chain).unwrap();
        acc_c.push(state.scores.as_slice());
        state.scores.copy_from(&frozen.scores);
        sample_variances(&mut state, &model, &y, &mut chain).unwrap();
        let mut v = vec![state.sigma_e2];
        v.extend(&state.lambda_s);
        v.extend(&state.lambda_e);
        acc_v.push(&v);
        state = frozen.clone();
    }
    let (miss_s, worst_s) = acc_s.gaussian_misses(&ms, &vs);
    let (miss_e, worst_e) = acc_e.gaussian_misses(&me, &ve);
    let (miss_c, worst_c) = acc_c.gaussian_misses(&mc, &vc);
    let mut miss_v = 0;
    let mut worst_v: f64 = 0.0;
    for (i, (shape, rate)) in ig.iter().enumerate() {
        let mean = rate / (shape - 1.0);
        let sd = mean / (shape - 2.0).sqrt();
        let z = (acc_v.sum[i] / DRAWS as f64 - mean).abs() / (sd / (DRAWS as f64).sqrt());
        worst_v = worst_v.max(z);
        miss_v += (z > 3.0) as usize;
    }

    // Inclusion probability against direct integration of the slab
    // marginal over the coefficient.
    let dens = |x: f64, var: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut alpha_err: f64 = 0.0;
    for beta_hat in [-3.0, -0.5, 0.0, 0.8, 2.5] {
        for v in [0.1f64, 1.0] {
            for tau in [0.01, 0.2, 1.0, 5.0, 30.0] {
                for pi in [0.1, 0.7] {
                    let centre = beta_hat * tau / (v + tau);
                    let spread = (v * tau / (v + tau)).sqrt();
                    let slab = simpson(
                        |b| dens(beta_hat - b, v) * dens(b, tau),
                        centre - 14.0 * spread,
                        centre + 14.0 * spread,
                        20_001,
                    );
                    let spike = dens(beta_hat, v);
                    let oracle = pi * slab / (pi * slab + (1.0 - pi) * spike);
                    alpha_err = alpha_err.max((inclusion_probability(beta_hat, v, tau, pi) - oracle).abs());
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let misses = miss_s + miss_e + miss_c + miss_v;
    let ok = misses == 0 && alpha_err < 1e-6 && secs < 120.0;
    gate.record(
        2,
        ok,
        started,
        format!(
            "{DRAWS} draws per conditional, moments beyond 3 MC s.e.: {misses} (max |z| beta_s {worst_s:.2}, beta_e {worst_e:.2}, \
             scores {worst_c:.2}, variances {worst_v:.2}); inclusion prob max err {alpha_err:.2e} (<1e-6) over 100 points"
        ),
    );
}

fn criterion_3(gate: &mut Gate) {
    let started = Instant::now();
    const DRAWS: usize = 100_000;
    let critical = 1.6276 / (DRAWS as f64).sqrt();
    let inf = f64::INFINITY;
    let mut details = Vec::new();
    let mut ok = true;
    let mut rng = rng_stream(303, 0);
    for (a, b) in [(-1.0, 1.0), (2.0, inf), (-inf, -3.0), (8.0, inf)] {
        let mut x: Vec<f64> = (0..DRAWS).map(|_| rtruncnorm(0.0, 1.0, a, b, &mut rng).unwrap()).collect();
        let finite = x.iter().all(|v| v.is_finite());
        x.sort_by(|p, q| p.total_cmp(q));
        // CDF of the truncated law, computed on the accurate side.
        let cdf = |v: f64| {
            if a > 0.0 {
                (norm_sf(a) - norm_sf(v)) / (norm_sf(a) - norm_sf(b))
            } else {
                (norm_cdf(v) - norm_cdf(a)) / (norm_cdf(b) - norm_cdf(a))
            }
        };
        let n = DRAWS as f64;
        let d = x.iter().enumerate().fold(0.0f64, |m, (i, v)| {
            let f = cdf(*v);
            m.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
        });
        ok &= finite && d < critical;
        details.push(format!("({a},{b}) D={d:.5}"));
    }
    gate.record(3, ok, started, format!("KS critical {critical:.5}: {}", details.join(", ")));
}

fn criterion_4(gate: &mut Gate) {
    let started = Instant::now();
    let mut rng = rng_stream(404, 0);
    let mut worst: f64 = 0.0;
    for c in 0..100 {
        let levels = 2 + c % 6;
        let mut cuts = vec![0.0];
        for _ in 1..levels - 1 {
            let last = *cuts.last().unwrap();
            cuts.push(last + rng.random_range(0.01..3.0));
        }
        let cuts = CutPoints::new(cuts).unwrap();
        for e in 0..100 {
            let eta = -12.0 + 24.0 * e as f64 / 99.0;
            let s: f64 = category_probabilities(eta, &cuts).iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    let probs = category_probabilities(0.0, &CutPoints::new(vec![0.0, 1.0, 2.0]).unwrap());
    let table = [0.5, 0.341345, 0.135905, 0.022750];
    let value_err = probs.iter().zip(table).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    gate.record(
        4,
        worst < 1e-12 && value_err < 1e-6,
        started,
        format!("max |sum-1| {worst:.1e} (<1e-12) over 10^4 points; table error {value_err:.1e} (<1e-6)"),
    );
}

fn scenario(setting: CurveSetting, reps: usize, seed: u64) -> SimulationScenario {
    let mut s = SimulationScenario::new(setting, CovStructure::Exponential);
    s.n_replicates = reps;
    s.seed = seed;
    s
}

fn models(list: &[ModelConfig], seed: u64) -> Vec<ModelConfig> {
    list.iter().map(|m| m.clone().with_samples(SAMPLES, BURN).with_seed(seed)).collect()
}

fn summary<'a>(table: &'a StudyTable, label: &str) -> &'a opfrm::simulate::ModelSummary {
    table.summaries.iter().find(|s| s.model == label).unwrap()
}

fn run_c5(out: &Path) -> (StudyTable, StudyTable) {
    let sig = run_study(
        &scenario(CurveSetting::Sigmoidal, 20, 5),
        &models(&[ModelConfig::ospline(2)], 5),
    )
    .unwrap();
    let sea = run_study(
        &scenario(CurveSetting::Seasonal, 20, 5),
        &models(&[ModelConfig::bspline(5), ModelConfig::bspline(10)], 5),
    )
    .unwrap();
    write_study(&sig, &out.join("sigmoidal")).unwrap();
    write_study(&sea, &out.join("seasonal")).unwrap();
    (sig, sea)
}

/// Strong signal: intercept 1 plus x_i times a curve rising from 1.5 to 3,
/// cuts (0, 1, 2). Pure noise: every level equally likely everywhere.
fn cv_dataset(strong: bool, seed: u64) -> OrdinalFunctionalDataset {
    let (n, t_len) = (48, 256);
    let mut rng = rng_stream(seed, 0);
    let shape = true_curve(CurveSetting::Sigmoidal, &unit_grid(t_len));
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut y = DMatrix::zeros(n, t_len);
    for i in 0..n {
        let e = latent_error_draw(CovStructure::Exponential, 0.5, t_len, &mut rng);
        for t in 0..t_len {
            y[(i, t)] = if strong {
                let latent = 1.0 + x[i] * (1.5 + 1.5 * shape[t]) + e[t];
                [0.0, 1.0, 2.0].iter().filter(|c| latent > **c).count()
            } else {
                rng.random_range(0..4)
            };
        }
    }
    let covariates = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    OrdinalFunctionalDataset::new(y, covariates, (1..=t_len).map(|v| v as f64).collect(), Some(4)).unwrap()
}

fn run_c9(out: &Path) -> (f64, f64) {
    let config = ModelConfig::ospline(2).with_samples(SAMPLES, BURN).with_seed(9);
    let mut overall = Vec::new();
    for (name, strong) in [("strong", true), ("noise", false)] {
        let data = cv_dataset(strong, 90 + strong as u64);
        let mut rng = rng_stream(config.seed, 0);
        let result = cross_validate(&data, &config, 6, &mut rng).unwrap();
        write_cv(&result, &config, &out.join(name)).unwrap();
        overall.push(result.overall);
    }
    (overall[0], overall[1])
}

fn same_tree(a: &Path, b: &Path) -> (usize, Vec<String>) {
    let mut files = 0;
    let mut differ = Vec::new();
    for sub in std::fs::read_dir(a).unwrap() {
        let sub = sub.unwrap().path();
        let name = sub.file_name().unwrap().to_owned();
        if sub.is_dir() {
            let (f, d) = same_tree(&sub, &b.join(&name));
            files += f;
            differ.extend(d);
        } else {
            files += 1;
            if std::fs::read(&sub).ok() != std::fs::read(b.join(&name)).ok() {
                differ.push(sub.display().to_string());
            }
        }
    }
    (files, differ)
}

fn main() {
    let only = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut gate = Gate { only, failed: Vec::new() };
    let scratch = tempfile::tempdir().unwrap();
    let first = scratch.path().join("first");
    let second = scratch.path().join("second");

    if gate.wants(1) {
        criterion_1(&mut gate);
    }
    if gate.wants(2) {
        criterion_2(&mut gate);
    }
    if gate.wants(3) {
        criterion_3(&mut gate);
    }
    if gate.wants(4) {
        criterion_4(&mut gate);
    }

    let mut fitted: Vec<StudyTable> = Vec::new();
    if gate.wants(5) || gate.wants(7) || gate.wants(10) {
        let started = Instant::now();
        let (sig, sea) = run_c5(&first.join("c5"));
        let o2 = summary(&sig, "ospline_K2");
        let b5 = summary(&sea, "bspline_K5");
        let b10 = summary(&sea, "bspline_K10");
        let failures = sig.failures.len() + sea.failures.len();
        let secs = started.elapsed().as_secs_f64();
        let ok = failures == 0 && o2.mise <= 0.01 && b10.mise < b5.mise && secs < 900.0;
        if gate.wants(5) {
            gate.record(
                5,
                ok,
                started,
                format!(
                    "20 reps: O-spline K=2 sigmoidal MISE {:.4} (<=0.01); seasonal B-spline K=10 MISE {:.4} < K=5 {:.4}; \
                     failed fits {failures}",
                    o2.mise, b10.mise, b5.mise
                ),
            );
        }
        fitted.push(sig);
        fitted.push(sea);
    }

    if gate.wants(6) || gate.wants(7) {
        let started = Instant::now();
        let table = run_study(
            &scenario(CurveSetting::Sigmoidal, 50, 6),
            &models(&[ModelConfig::ospline(4), ModelConfig::symmlet(6), ModelConfig::bspline(5)], 6),
        )
        .unwrap();
        let o4 = summary(&table, "ospline_K4");
        let s6 = summary(&table, "symmlet_J6");
        let b5 = summary(&table, "bspline_K5");
        let secs = started.elapsed().as_secs_f64();
        let ok = table.failures.is_empty()
            && o4.n_ok >= 50
            && s6.n_ok >= 50
            && o4.joint_coverage >= 0.93
            && s6.joint_coverage >= 0.93
            && b5.pw_coverage <= 0.90
            && secs < 1800.0;
        if gate.wants(6) {
            gate.record(
                6,
                ok,
                started,
                format!(
                    "50 reps: joint coverage O-spline K=4 {:.4}, Symmlet J=6 {:.4} (>=0.93); point-wise B-spline K=5 {:.4} (<=0.90); \
                     failed fits {}",
                    o4.joint_coverage,
                    s6.joint_coverage,
                    b5.pw_coverage,
                    table.failures.len()
                ),
            );
        }
        fitted.push(table);
    }

    if gate.wants(7) {
        let started = Instant::now();
        let fits: usize = fitted.iter().flat_map(|t| &t.summaries).map(|s| s.n_ok).sum();
        let violations: usize = fitted.iter().flat_map(|t| &t.summaries).map(|s| s.structure_violations).sum();
        gate.record(
            7,
            violations == 0 && fits > 0,
            started,
            format!("{fits} fitted bands, grid points violating containment or sig_joint => sig_pw: {violations}"),
        );
    }

    if gate.wants(8) {
        let started = Instant::now();
        let table = run_study(
            &scenario(CurveSetting::Null, 20, 8),
            &models(&[ModelConfig::symmlet(6), ModelConfig::symmlet(8), ModelConfig::ospline(2)], 8),
        )
        .unwrap();
        // With a zero truth, covering the truth everywhere is the same as
        // never excluding 0.
        let rate = |label: &str| 1.0 - summary(&table, label).joint_covered;
        let (s6, s8, o2) = (rate("symmlet_J6"), rate("symmlet_J8"), rate("ospline_K2"));
        let ok = table.failures.is_empty() && s6 <= 0.10 && s8 <= 0.10;
        gate.record(
            8,
            ok,
            started,
            format!(
                "20 null reps, share with joint band excluding 0 somewhere (<=0.10): Symmlet J=6 {s6:.2}, J=8 {s8:.2}; \
                 O-spline K=2 {o2:.2} (reported, not gated)"
            ),
        );
    }

    let mut cv_ran = false;
    if gate.wants(9) || gate.wants(10) {
        let started = Instant::now();
        let (strong, noise) = run_c9(&first.join("c9"));
        cv_ran = true;
        let secs = started.elapsed().as_secs_f64();
        if gate.wants(9) {
            gate.record(
                9,
                strong >= 0.40 && (noise - 0.25).abs() <= 0.05 && secs < 600.0,
                started,
                format!("six-fold CV accuracy: strong signal {strong:.4} (>=0.40), pure noise {noise:.4} (0.25 +/- 0.05)"),
            );
        }
    }

    if gate.wants(10) && cv_ran {
        let started = Instant::now();
        run_c5(&second.join("c5"));
        run_c9(&second.join("c9"));
        let (files, differ) = same_tree(&first, &second);
        gate.record(
            10,
            files > 0 && differ.is_empty(),
            started,
            format!("reran criteria 5 and 9: {files} files compared, {} differ {:?}", differ.len(), differ),
        );
    }

    if gate.failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", gate.failed);
        std::process::exit(1);
    }
}
