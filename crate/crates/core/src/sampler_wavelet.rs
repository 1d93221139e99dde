//! Wavelet-space Gibbs sampler with spike-and-slab shrinkage.
//!
//! Each wavelet coefficient column is an independent regression of the
//! projected latent curves on the covariates. Coefficients get a mixture of
//! a point mass at zero and a normal slab with level-specific variance
//! `tau` and inclusion probability `pi`; coefficient-wise noise variances
//! are updated by a log-normal random-walk Metropolis step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::basis::wavelet::{WaveletFamily, WaveletTransform};
use crate::config::{BasisKind, ModelConfig};
use crate::data::OrdinalFunctionalDataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::latent::{sample_cutpoints, sample_cutpoints_collapsed, sample_latent, CutPoints, CutTuner, LatentState};
use crate::rng::{rng_stream, ChainRng};

/// Standardized-MLE threshold used by the empirical Bayes initialization.
const ZETA_THRESHOLD: f64 = 2.0;
const PI_FLOOR: f64 = 0.05;
const PI_CAP: f64 = 0.95;
const PI_PRIOR_WEIGHT: f64 = 2.0;
const TAU_SHAPE: f64 = 2.0;
const SIGMA2_SHAPE: f64 = 2.0;
const TARGET_ACCEPT: f64 = 0.44;
const ADAPT_BATCH: usize = 50;
const INITIAL_LOG_STEP: f64 = 0.5;
const VARIANCE_FLOOR: f64 = 1e-10;

/// Fixed hyperparameters. The tau and pi priors are set per (covariate,
/// scale); the noise-variance prior is shared by all columns.
#[derive(Clone, Debug)]
pub struct WaveletHyper {
    pub a_tau: DMatrix<f64>,
    pub b_tau: DMatrix<f64>,
    pub a_pi: DMatrix<f64>,
    pub b_pi: DMatrix<f64>,
    pub a_sigma2: f64,
    pub b_sigma2: f64,
}

#[derive(Clone, Debug)]
pub struct WaveletChainState {
    /// P x T* wavelet-space coefficients.
    pub beta_w: DMatrix<f64>,
    /// P x T* inclusion indicators.
    pub gamma: DMatrix<bool>,
    /// P x (J+1) slab variances.
    pub tau: DMatrix<f64>,
    /// P x (J+1) inclusion probabilities.
    pub pi: DMatrix<f64>,
    /// Noise variance of each coefficient column.
    pub sigma2: Vec<f64>,
    pub hyper: WaveletHyper,
    /// Conditional least-squares estimate of each coefficient given the others.
    pub mle_beta: DMatrix<f64>,
    /// Sampling variance of `mle_beta`.
    pub mle_var: DMatrix<f64>,
    /// Scale index of each coefficient column.
    pub scale: Vec<usize>,
    /// Log of the Metropolis proposal standard deviation, per column.
    pub log_step: Vec<f64>,
    accepted: Vec<u32>,
}

impl WaveletChainState {
    pub fn n_covariates(&self) -> usize {
        self.beta_w.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.beta_w.ncols()
    }

    /// Data-scale coefficient curves, P x T, via the inverse transform.
    pub fn data_scale_beta(&self, wt: &WaveletTransform) -> DMatrix<f64> {
        let (p, t) = (self.n_covariates(), wt.signal_len());
        let mut out = DMatrix::zeros(p, t);
        let mut coeffs = vec![0.0; self.n_coeffs()];
        let mut curve = vec![0.0; t];
        for r in 0..p {
            coeffs.iter_mut().zip(self.beta_w.row(r).iter()).for_each(|(d, s)| *d = *s);
            wt.inverse_into(&coeffs, &mut curve);
            for (c, v) in curve.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        out
    }
}

/// Projects each latent curve (row) into the wavelet domain: N x T*.
pub fn project_rows(y: &DMatrix<f64>, wt: &WaveletTransform) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), wt.n_coeffs());
    let mut row = vec![0.0; y.ncols()];
    let mut coeffs = vec![0.0; wt.n_coeffs()];
    for i in 0..y.nrows() {
        row.iter_mut().zip(y.row(i).iter()).for_each(|(d, s)| *d = *s);
        wt.forward_into(&row, &mut coeffs);
        for (c, v) in coeffs.iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    out
}

fn xtx_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(Error::RankDeficient(format!("{n} subjects for {p} covariates")));
    }
    let xtx = x.transpose() * x;
    let scale = xtx.diagonal().max();
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("X'X is singular".into()))?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-10 * scale) {
        return Err(Error::RankDeficient("X'X is numerically singular".into()));
    }
    Ok(chol.inverse())
}

/// Least-squares start and empirical Bayes hyperparameters.
///
/// Per column: OLS coefficients, residual mean square as the noise
/// variance, and V = sigma2 * [(X'X)^{-1}]_pp. Per (covariate, scale): the
/// Beta prior on pi has mean equal to the share of |beta/sqrt(V)| > 2
/// (clamped to [0.05, 0.95]) and total weight 2; the inverse-gamma prior on
/// tau has shape 2 and mean equal to the mean square of the large
/// coefficients (all coefficients of the scale if none are large).
pub fn empirical_bayes_init(
    y_w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    wt: &WaveletTransform,
) -> Result<WaveletChainState> {
    let (n, p) = x.shape();
    let t_star = wt.n_coeffs();
    if y_w.shape() != (n, t_star) {
        return Err(Error::Dimension(format!(
            "projected latent is {:?}, expected ({n}, {t_star})",
            y_w.shape()
        )));
    }
    let xtx_inv = xtx_inverse(x)?;
    let ols = &xtx_inv * (x.transpose() * y_w);
    let resid = y_w - x * &ols;
    let dof = (n - p) as f64;
    let sigma2: Vec<f64> = (0..t_star)
        .map(|c| (resid.column(c).norm_squared() / dof).max(VARIANCE_FLOOR))
        .collect();
    let mle_var = DMatrix::from_fn(p, t_star, |r, c| sigma2[c] * xtx_inv[(r, r)]);
    let scale: Vec<usize> = wt.index_map().iter().map(|(j, _)| *j).collect();
    let n_scales = wt.n_scales();

    let mut a_pi = DMatrix::zeros(p, n_scales);
    let mut b_pi = DMatrix::zeros(p, n_scales);
    let a_tau = DMatrix::from_element(p, n_scales, TAU_SHAPE);
    let mut b_tau = DMatrix::zeros(p, n_scales);
    let mut gamma = DMatrix::from_element(p, t_star, false);
    let mut beta_w = DMatrix::zeros(p, t_star);
    for r in 0..p {
        for j in 0..n_scales {
            let cols: Vec<usize> = (0..t_star).filter(|&c| scale[c] == j).collect();
            let large: Vec<usize> = cols
                .iter()
                .copied()
                .filter(|&c| ols[(r, c)].abs() / mle_var[(r, c)].sqrt() > ZETA_THRESHOLD)
                .collect();
            let share = large.len() as f64 / cols.len().max(1) as f64;
            let mean_pi = share.clamp(PI_FLOOR, PI_CAP);
            a_pi[(r, j)] = PI_PRIOR_WEIGHT * mean_pi;
            b_pi[(r, j)] = PI_PRIOR_WEIGHT * (1.0 - mean_pi);
            let pool = if large.is_empty() { &cols } else { &large };
            let mean_sq = pool.iter().map(|&c| ols[(r, c)].powi(2)).sum::<f64>() / pool.len().max(1) as f64;
            b_tau[(r, j)] = mean_sq.max(VARIANCE_FLOOR) * (TAU_SHAPE - 1.0);
            for &c in &large {
                gamma[(r, c)] = true;
                beta_w[(r, c)] = ols[(r, c)];
            }
        }
    }
    let tau = DMatrix::from_fn(p, n_scales, |r, j| b_tau[(r, j)] / (a_tau[(r, j)] - 1.0));
    let pi = DMatrix::from_fn(p, n_scales, |r, j| a_pi[(r, j)] / (a_pi[(r, j)] + b_pi[(r, j)]));
    let mean_sigma2 = sigma2.iter().sum::<f64>() / t_star as f64;
    Ok(WaveletChainState {
        beta_w,
        gamma,
        tau,
        pi,
        hyper: WaveletHyper {
            a_tau,
            b_tau,
            a_pi,
            b_pi,
            a_sigma2: SIGMA2_SHAPE,
            b_sigma2: mean_sigma2 * (SIGMA2_SHAPE - 1.0),
        },
        sigma2,
        mle_beta: ols,
        mle_var,
        scale,
        log_step: vec![INITIAL_LOG_STEP.ln(); t_star],
        accepted: vec![0; t_star],
    })
}

/// Log of the slab-to-spike marginal likelihood ratio of an estimate
/// `beta_hat` with sampling variance `v`: N(beta_hat; 0, v + tau) over
/// N(beta_hat; 0, v).
pub fn log_bayes_factor(beta_hat: f64, v: f64, tau: f64) -> f64 {
    let zeta2 = beta_hat * beta_hat / v;
    -0.5 * (tau / v).ln_1p() + 0.5 * zeta2 * tau / (v + tau)
}

/// Posterior inclusion probability alpha = O / (O + 1) with prior odds
/// pi / (1 - pi) times the Bayes factor.
pub fn inclusion_probability(beta_hat: f64, v: f64, tau: f64, pi: f64) -> f64 {
    let log_odds = pi.ln() - (-pi).ln_1p() + log_bayes_factor(beta_hat, v, tau);
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// Mean and variance of the slab component: beta_hat and v shrunk by
/// (1 + v/tau)^{-1}.
pub fn slab_moments(beta_hat: f64, v: f64, tau: f64) -> (f64, f64) {
    let shrink = 1.0 / (1.0 + v / tau);
    (beta_hat * shrink, v * shrink)
}

/// Recomputes the conditional estimate of coefficient (p, c) from the
/// partial residual `resid + x_p * beta_pc`, and its variance
/// sigma2_c / x_p'x_p. `resid` must hold y_c - X beta_c on entry and still
/// does on exit.
pub fn refresh_mle(
    state: &mut WaveletChainState,
    resid: &DVector<f64>,
    x: &DMatrix<f64>,
    x_norm2: &[f64],
    p: usize,
    c: usize,
) {
    let current = state.beta_w[(p, c)];
    let xr = x.column(p).dot(resid);
    state.mle_beta[(p, c)] = xr / x_norm2[p] + current;
    state.mle_var[(p, c)] = state.sigma2[c] / x_norm2[p];
}

/// Draws (gamma, beta) at (p, c) from the point-mass/normal mixture using
/// the stored `mle_beta` and `mle_var`.
pub fn sample_spike_slab<R: Rng + ?Sized>(state: &mut WaveletChainState, p: usize, c: usize, rng: &mut R) {
    let j = state.scale[c];
    let (beta_hat, v) = (state.mle_beta[(p, c)], state.mle_var[(p, c)]);
    let (tau, pi) = (state.tau[(p, j)], state.pi[(p, j)]);
    let alpha = inclusion_probability(beta_hat, v, tau, pi);
    if rng.random::<f64>() < alpha {
        let (mu, var) = slab_moments(beta_hat, v, tau);
        let z: f64 = rng.sample(StandardNormal);
        state.gamma[(p, c)] = true;
        state.beta_w[(p, c)] = mu + var.sqrt() * z;
    } else {
        state.gamma[(p, c)] = false;
        state.beta_w[(p, c)] = 0.0;
    }
}

/// Log of the unnormalized full conditional of a noise variance: an
/// inverse-gamma prior times the Gaussian likelihood of `n` residuals with
/// sum of squares `ssr`.
fn log_sigma2_target(s: f64, ssr: f64, n: f64, a: f64, b: f64) -> f64 {
    -(a + 1.0 + 0.5 * n) * s.ln() - (b + 0.5 * ssr) / s
}

/// Metropolis-Hastings update of sigma2[c] with a log-normal proposal
/// centred at the current value. Returns whether the move was accepted.
pub fn sample_sigma2_mh<R: Rng + ?Sized>(
    state: &mut WaveletChainState,
    y_col: &[f64],
    x: &DMatrix<f64>,
    c: usize,
    rng: &mut R,
) -> bool {
    let n = y_col.len();
    let mut ssr = 0.0;
    for (i, y) in y_col.iter().enumerate() {
        let mut fit = 0.0;
        for r in 0..state.n_covariates() {
            fit += x[(i, r)] * state.beta_w[(r, c)];
        }
        ssr += (y - fit) * (y - fit);
    }
    let step = state.log_step[c].exp();
    let current = state.sigma2[c];
    let z: f64 = rng.sample(StandardNormal);
    let proposal = current * (step * z).exp();
    let (a, b) = (state.hyper.a_sigma2, state.hyper.b_sigma2);
    // ln(proposal / current) is the Hastings term of the log-normal walk.
    let log_ratio = log_sigma2_target(proposal, ssr, n as f64, a, b) - log_sigma2_target(current, ssr, n as f64, a, b)
        + (proposal / current).ln();
    let accept = rng.random::<f64>().ln() < log_ratio && proposal.is_finite() && proposal > 0.0;
    if accept {
        state.sigma2[c] = proposal;
        state.accepted[c] += 1;
    }
    accept
}

/// Nudges each column's proposal scale toward the target acceptance rate
/// using the acceptance count of the batch just finished.
fn adapt_steps(state: &mut WaveletChainState, batch_index: usize) {
    let delta = (1.0 / (batch_index as f64).sqrt()).min(0.1);
    for c in 0..state.log_step.len() {
        let rate = state.accepted[c] as f64 / ADAPT_BATCH as f64;
        state.log_step[c] += if rate > TARGET_ACCEPT { delta } else { -delta };
        state.accepted[c] = 0;
    }
}

/// Conjugate updates of tau[p, j] and pi[p, j] from the coefficients of
/// scale j.
pub fn sample_tau_pi<R: Rng + ?Sized>(state: &mut WaveletChainState, p: usize, j: usize, rng: &mut R) {
    let mut n_in = 0.0;
    let mut n_out = 0.0;
    let mut ss = 0.0;
    for c in 0..state.n_coeffs() {
        if state.scale[c] != j {
            continue;
        }
        if state.gamma[(p, c)] {
            n_in += 1.0;
            ss += state.beta_w[(p, c)].powi(2);
        } else {
            n_out += 1.0;
        }
    }
    let shape = state.hyper.a_tau[(p, j)] + 0.5 * n_in;
    let rate = state.hyper.b_tau[(p, j)] + 0.5 * ss;
    state.tau[(p, j)] = sample_inverse_gamma(shape, rate, rng).max(VARIANCE_FLOOR);
    let beta = Beta::new(state.hyper.a_pi[(p, j)] + n_in, state.hyper.b_pi[(p, j)] + n_out)
        .expect("positive beta parameters");
    state.pi[(p, j)] = beta.sample(rng).clamp(1e-12, 1.0 - 1e-12);
}

/// Draw from the inverse-gamma distribution with the given shape and rate.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// One spike-and-slab sweep over every (covariate, column) pair.
fn coefficient_sweep<R: Rng + ?Sized>(
    state: &mut WaveletChainState,
    y_w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    x_norm2: &[f64],
    rng: &mut R,
) {
    let p = state.n_covariates();
    for c in 0..state.n_coeffs() {
        let beta_c = state.beta_w.column(c).into_owned();
        let mut resid = y_w.column(c) - x * beta_c;
        for r in 0..p {
            refresh_mle(state, &resid, x, x_norm2, r, c);
            let old = state.beta_w[(r, c)];
            sample_spike_slab(state, r, c, rng);
            let change = state.beta_w[(r, c)] - old;
            if change != 0.0 {
                resid.axpy(-change, &x.column(r), 1.0);
            }
        }
    }
}

pub fn wavelet_transform_for(config: &ModelConfig, len: usize) -> Result<WaveletTransform> {
    WaveletTransform::new(
        WaveletFamily::Symmlet,
        config.vanishing_moments,
        config.basis_size,
        config.padding,
        len,
    )
}

pub fn fit_wavelet(data: &OrdinalFunctionalDataset, config: &ModelConfig) -> Result<PosteriorDraws> {
    let mut rng = rng_stream(config.seed, 0);
    fit_wavelet_with_rng(data, config, &mut rng)
}

pub fn fit_wavelet_with_rng(
    data: &OrdinalFunctionalDataset,
    config: &ModelConfig,
    rng: &mut ChainRng,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if config.basis != BasisKind::Symmlet {
        return Err(Error::InvalidInput(format!("wavelet sampler given basis {}", config.basis)));
    }
    let wt = wavelet_transform_for(config, data.n_timepoints())?;
    let x = data.covariates();
    let (p, t) = (data.n_covariates(), data.n_timepoints());
    let x_norm2: Vec<f64> = (0..p).map(|r| x.column(r).norm_squared()).collect();

    let mut latent = LatentState::initialize(data, CutPoints::unit_spaced(data.n_levels()));
    let mut y_w = project_rows(&latent.y_star, &wt);
    let mut state = empirical_bayes_init(&y_w, x, &wt)?;

    let n_keep = config.n_keep();
    let mut beta_draws = DMatrix::zeros(n_keep, p * t);
    let mut cut_draws = DMatrix::zeros(n_keep, data.n_levels() - 1);
    let mut beta = state.data_scale_beta(&wt);
    let mut tuner = CutTuner::for_data(data);
    for iter in 0..config.n_samples {
        let mean = x * &beta;
        sample_cutpoints_collapsed(&mut latent, &mean, data, &mut tuner, iter < config.n_burn, rng)?;
        sample_latent(&mut latent, &mean, data, rng)?;
        sample_cutpoints(&mut latent, data, rng)?;
        y_w = project_rows(&latent.y_star, &wt);

        coefficient_sweep(&mut state, &y_w, x, &x_norm2, rng);
        for c in 0..state.n_coeffs() {
            sample_sigma2_mh(&mut state, y_w.column(c).as_slice(), x, c, rng);
        }
        if iter < config.n_burn && (iter + 1) % ADAPT_BATCH == 0 {
            adapt_steps(&mut state, (iter + 1) / ADAPT_BATCH);
        }
        for r in 0..p {
            for j in 0..wt.n_scales() {
                sample_tau_pi(&mut state, r, j, rng);
            }
        }
        beta = state.data_scale_beta(&wt);

        if iter >= config.n_burn {
            let m = iter - config.n_burn;
            for r in 0..p {
                for c in 0..t {
                    beta_draws[(m, r * t + c)] = beta[(r, c)];
                }
            }
            for (k, v) in latent.cuts.values().iter().enumerate() {
                cut_draws[(m, k)] = *v;
            }
        }
    }
    PosteriorDraws::new(beta_draws, cut_draws, p, t, config.clone())
}
