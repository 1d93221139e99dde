//! Penalized-spline Gibbs sampler with a functional principal component
//! residual structure.
//!
//! Latent curves are modelled as `X beta_s' Theta' + C beta_e' Theta' + E`
//! with `Theta` a cubic B-spline design. Both coefficient blocks get
//! Gaussian priors whose precision is the basis penalty scaled by one
//! smoothing variance per column; scores are standard normal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::fpc::init_fpc;
use crate::basis::spline::{bspline_design, ospline_design, SplineBasis};
use crate::config::{BasisKind, ModelConfig};
use crate::data::OrdinalFunctionalDataset;
use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};
use crate::latent::{sample_cutpoints, sample_cutpoints_collapsed, sample_latent, CutPoints, CutTuner, LatentState};
use crate::rng::{rng_stream, ChainRng};
use crate::sampler_wavelet::sample_inverse_gamma;

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SplineHyper {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_s: f64,
    /// One rate per covariate, fixed from the initial least-squares fit.
    pub b_s: Vec<f64>,
    pub a_e: f64,
    pub b_e: f64,
}

impl SplineHyper {
    /// A_sigma = B_sigma = 1, A_S = K/2, A_E = B_E = Kp/2 and
    /// B_S[p] = max(1, beta_hat_p' Delta beta_hat_p / 2).
    pub fn standard(n_basis: usize, n_fpc: usize, beta_hat: &DMatrix<f64>, penalty: &DMatrix<f64>) -> Self {
        let b_s = (0..beta_hat.ncols())
            .map(|p| (0.5 * quad_form(penalty, &beta_hat.column(p).into_owned())).max(1.0))
            .collect();
        SplineHyper {
            a_sigma: 1.0,
            b_sigma: 1.0,
            a_s: n_basis as f64 / 2.0,
            b_s,
            a_e: n_fpc as f64 / 2.0,
            b_e: n_fpc as f64 / 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplineChainState {
    /// K x P fixed-effect coefficients.
    pub beta_s: DMatrix<f64>,
    /// K x Kp fPC coefficients.
    pub beta_e: DMatrix<f64>,
    /// N x Kp subject scores.
    pub scores: DMatrix<f64>,
    pub sigma_e2: f64,
    /// Smoothing variance of each fixed-effect curve.
    pub lambda_s: Vec<f64>,
    /// Smoothing variance of each fPC curve.
    pub lambda_e: Vec<f64>,
    pub hyper: SplineHyper,
}

impl SplineChainState {
    /// Data-scale coefficient curves, P x T.
    pub fn data_scale_beta(&self, model: &SplineModel) -> DMatrix<f64> {
        (model.theta() * &self.beta_s).transpose()
    }

    /// Fixed part of the latent mean, N x T.
    pub fn fixed_mean(&self, model: &SplineModel) -> DMatrix<f64> {
        &model.x * self.data_scale_beta(model)
    }

    /// fPC part of the latent mean, N x T.
    pub fn fpc_mean(&self, model: &SplineModel) -> DMatrix<f64> {
        &self.scores * (model.theta() * &self.beta_e).transpose()
    }

    pub fn check(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma_e2) || !self.lambda_s.iter().chain(&self.lambda_e).all(|v| positive(*v)) {
            return Err(Error::CorruptState("non-positive variance in spline chain".into()));
        }
        Ok(())
    }
}

/// Quantities that stay fixed over a chain.
#[derive(Clone, Debug)]
pub struct SplineModel {
    pub basis: SplineBasis,
    pub x: DMatrix<f64>,
    gram: DMatrix<f64>,
    xtx: DMatrix<f64>,
    penalty_rank: usize,
}

impl SplineModel {
    pub fn new(basis: SplineBasis, x: DMatrix<f64>) -> Self {
        let gram = basis.design.transpose() * &basis.design;
        let xtx = x.transpose() * &x;
        let eig = basis.penalty.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let penalty_rank = eig.eigenvalues.iter().filter(|v| **v > 1e-9 * max).count();
        SplineModel {
            basis,
            x,
            gram,
            xtx,
            penalty_rank,
        }
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.basis.design
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.basis.penalty
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }

    /// Rank of the penalty: the number of penalized directions, which is
    /// the effective dimension of each smoothing prior.
    pub fn penalty_rank(&self) -> usize {
        self.penalty_rank
    }
}

fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Precision of vec(B) for a K x Q coefficient block under the likelihood
/// `(a ⊗ Theta'Theta) / sigma2` and prior `diag(1 / lambda) ⊗ Delta`.
/// Entry (q*K + k, r*K + l).
pub fn kron_precision(a: &DMatrix<f64>, gram: &DMatrix<f64>, penalty: &DMatrix<f64>, lambda: &[f64], sigma2: f64) -> DMatrix<f64> {
    let (q, k) = (a.nrows(), gram.nrows());
    let mut prec = DMatrix::zeros(q * k, q * k);
    for r in 0..q {
        for s in 0..q {
            let w = a[(r, s)] / sigma2;
            let mut block = prec.view_mut((r * k, s * k), (k, k));
            block += gram * w;
            if r == s {
                block += penalty / lambda[r];
            }
        }
    }
    prec
}

/// Draws from N(Q^{-1} b, Q^{-1}) through the Cholesky factor of Q.
fn sample_from_precision<R: Rng + ?Sized>(prec: DMatrix<f64>, rhs: &DVector<f64>, what: &str, rng: &mut R) -> Result<DVector<f64>> {
    let chol = prec
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what} precision")))?;
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(rhs.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what} factor")))?;
    Ok(mean + noise)
}

/// Column-stacked vec of a K x Q matrix.
fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Mean and precision of the beta_s conditional, flattened column-wise.
pub fn beta_s_conditional(state: &SplineChainState, model: &SplineModel, y_star: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let resid = y_star - state.fpc_mean(model);
    let rhs = vec_of(&(model.theta().transpose() * resid.transpose() * &model.x)) / state.sigma_e2;
    let prec = kron_precision(&model.xtx, &model.gram, model.penalty(), &state.lambda_s, state.sigma_e2);
    let mean = prec.clone().cholesky().map(|c| c.solve(&rhs)).unwrap_or(rhs);
    (mean, prec)
}

pub fn sample_beta_s<R: Rng + ?Sized>(
    state: &mut SplineChainState,
    model: &SplineModel,
    y_star: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let resid = y_star - state.fpc_mean(model);
    let rhs = vec_of(&(model.theta().transpose() * resid.transpose() * &model.x)) / state.sigma_e2;
    let prec = kron_precision(&model.xtx, &model.gram, model.penalty(), &state.lambda_s, state.sigma_e2);
    let draw = sample_from_precision(prec, &rhs, "fixed-effect", rng)?;
    state.beta_s = DMatrix::from_column_slice(model.n_basis(), state.beta_s.ncols(), draw.as_slice());
    Ok(())
}

/// Mean and precision of the beta_e conditional, flattened column-wise.
pub fn beta_e_conditional(state: &SplineChainState, model: &SplineModel, y_star: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let resid = y_star - state.fixed_mean(model);
    let rhs = vec_of(&(model.theta().transpose() * resid.transpose() * &state.scores)) / state.sigma_e2;
    let ctc = state.scores.transpose() * &state.scores;
    let prec = kron_precision(&ctc, &model.gram, model.penalty(), &state.lambda_e, state.sigma_e2);
    let mean = prec.clone().cholesky().map(|c| c.solve(&rhs)).unwrap_or(rhs);
    (mean, prec)
}

pub fn sample_beta_e<R: Rng + ?Sized>(
    state: &mut SplineChainState,
    model: &SplineModel,
    y_star: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let resid = y_star - state.fixed_mean(model);
    let rhs = vec_of(&(model.theta().transpose() * resid.transpose() * &state.scores)) / state.sigma_e2;
    let ctc = state.scores.transpose() * &state.scores;
    let prec = kron_precision(&ctc, &model.gram, model.penalty(), &state.lambda_e, state.sigma_e2);
    let draw = sample_from_precision(prec, &rhs, "fPC", rng)?;
    state.beta_e = DMatrix::from_column_slice(model.n_basis(), state.beta_e.ncols(), draw.as_slice());
    Ok(())
}

/// Shared precision and per-subject means (Kp x N) of the score rows.
pub fn scores_conditional(state: &SplineChainState, model: &SplineModel, y_star: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let curves = model.theta() * &state.beta_e;
    let kp = curves.ncols();
    let prec = curves.transpose() * &curves / state.sigma_e2 + DMatrix::identity(kp, kp);
    let resid = y_star - state.fixed_mean(model);
    let rhs = curves.transpose() * resid.transpose() / state.sigma_e2;
    let means = prec.clone().cholesky().expect("identity-dominated precision").solve(&rhs);
    (prec, means)
}

pub fn sample_scores<R: Rng + ?Sized>(
    state: &mut SplineChainState,
    model: &SplineModel,
    y_star: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let (prec, means) = scores_conditional(state, model, y_star);
    let chol = prec
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("score precision".into()))?;
    let lt = chol.l().transpose();
    let kp = means.nrows();
    for i in 0..means.ncols() {
        let z = DVector::from_fn(kp, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = lt.solve_upper_triangular(&z).expect("nonzero diagonal");
        for k in 0..kp {
            state.scores[(i, k)] = means[(k, i)] + noise[k];
        }
    }
    Ok(())
}

/// Shape and rate of the inverse-gamma conditionals, in the order
/// sigma_e2, lambda_s[..], lambda_e[..].
pub fn variance_conditionals(state: &SplineChainState, model: &SplineModel, y_star: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let h = &state.hyper;
    let resid = y_star - state.fixed_mean(model) - state.fpc_mean(model);
    let nt = (y_star.nrows() * y_star.ncols()) as f64;
    let half_rank = model.penalty_rank() as f64 / 2.0;
    let mut out = vec![(h.a_sigma + nt / 2.0, h.b_sigma + 0.5 * resid.norm_squared())];
    for p in 0..state.beta_s.ncols() {
        let q = quad_form(model.penalty(), &state.beta_s.column(p).into_owned());
        out.push((h.a_s + half_rank, h.b_s[p] + 0.5 * q));
    }
    for k in 0..state.beta_e.ncols() {
        let q = quad_form(model.penalty(), &state.beta_e.column(k).into_owned());
        out.push((h.a_e + half_rank, h.b_e + 0.5 * q));
    }
    out
}

pub fn sample_variances<R: Rng + ?Sized>(
    state: &mut SplineChainState,
    model: &SplineModel,
    y_star: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let params = variance_conditionals(state, model, y_star);
    let mut draws = params
        .into_iter()
        .map(|(shape, rate)| sample_inverse_gamma(shape, rate, rng).max(VARIANCE_FLOOR));
    state.sigma_e2 = draws.next().expect("sigma draw");
    for v in state.lambda_s.iter_mut().chain(state.lambda_e.iter_mut()) {
        *v = draws.next().expect("lambda draw");
    }
    state.check()
}

/// Separable least-squares fit of `y` (N x T) on X ⊗ Theta: K x P.
fn least_squares_beta(y: &DMatrix<f64>, model: &SplineModel) -> Result<DMatrix<f64>> {
    let solve = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        match a.clone().cholesky() {
            Some(ch) => Ok(ch.solve(b)),
            None => a
                .clone()
                .svd(true, true)
                .solve(b, 1e-10)
                .map_err(|e| Error::RankDeficient(e.to_string())),
        }
    };
    let theta_y = model.theta().transpose() * y.transpose() * &model.x;
    let left = solve(&model.gram, &theta_y)?;
    Ok(solve(&model.xtx, &left.transpose())?.transpose())
}

/// Starting state from a latent matrix: least-squares fixed effects,
/// truncated-SVD fPCs of the residuals, residual mean square as sigma_e2,
/// and smoothing variances at their conditional means.
pub fn initial_state(model: &SplineModel, y_star: &DMatrix<f64>, n_fpc: usize) -> Result<(SplineChainState, Option<String>)> {
    let (n, p) = model.x.shape();
    if n <= p {
        return Err(Error::RankDeficient(format!("{n} subjects for {p} covariates")));
    }
    let beta_hat = least_squares_beta(y_star, model)?;
    let resid = y_star - &model.x * (model.theta() * &beta_hat).transpose();
    let fpc = init_fpc(&resid, model.theta(), n_fpc)?;
    let kp = fpc.scores.ncols().max(1);
    let (scores, beta_e) = if fpc.scores.ncols() == 0 {
        (DMatrix::zeros(n, 1), DMatrix::zeros(model.n_basis(), 1))
    } else {
        (fpc.scores, fpc.loadings)
    };
    let hyper = SplineHyper::standard(model.n_basis(), kp, &beta_hat, model.penalty());
    let mut state = SplineChainState {
        beta_s: beta_hat,
        beta_e,
        scores,
        sigma_e2: 1.0,
        lambda_s: vec![1.0; p],
        lambda_e: vec![1.0; kp],
        hyper,
    };
    let params = variance_conditionals(&state, model, y_star);
    let mean_ig = |(shape, rate): (f64, f64)| (rate / (shape - 1.0).max(0.5)).max(VARIANCE_FLOOR);
    state.sigma_e2 = mean_ig(params[0]);
    for (v, prm) in state.lambda_s.iter_mut().chain(state.lambda_e.iter_mut()).zip(&params[1..]) {
        *v = mean_ig(*prm);
    }
    Ok((state, fpc.warning))
}

pub fn spline_basis_for(config: &ModelConfig, grid: &[f64]) -> Result<SplineBasis> {
    match config.basis {
        BasisKind::BSpline => bspline_design(grid, config.basis_size, config.eta),
        BasisKind::OSpline => ospline_design(grid, config.basis_size),
        BasisKind::Symmlet => Err(Error::InvalidInput("spline sampler given a wavelet basis".into())),
    }
}

pub fn fit_spline(data: &OrdinalFunctionalDataset, config: &ModelConfig) -> Result<PosteriorDraws> {
    let mut rng = rng_stream(config.seed, 0);
    fit_spline_with_rng(data, config, &mut rng)
}

pub fn fit_spline_with_rng(
    data: &OrdinalFunctionalDataset,
    config: &ModelConfig,
    rng: &mut ChainRng,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let basis = spline_basis_for(config, data.time_grid())?;
    let model = SplineModel::new(basis, data.covariates().clone());
    let (p, t) = (data.n_covariates(), data.n_timepoints());

    let mut latent = LatentState::initialize(data, CutPoints::unit_spaced(data.n_levels()));
    let (mut state, _) = initial_state(&model, &latent.y_star, config.n_fpc)?;

    let n_keep = config.n_keep();
    let mut beta_draws = DMatrix::zeros(n_keep, p * t);
    let mut cut_draws = DMatrix::zeros(n_keep, data.n_levels() - 1);
    let mut tuner = CutTuner::for_data(data);
    for iter in 0..config.n_samples {
        // The latent scale carries unit variance around the fixed effects;
        // the fPC block only models within-curve dependence.
        let mean = state.fixed_mean(&model);
        sample_cutpoints_collapsed(&mut latent, &mean, data, &mut tuner, iter < config.n_burn, rng)?;
        sample_latent(&mut latent, &mean, data, rng)?;
        sample_cutpoints(&mut latent, data, rng)?;
        sample_beta_s(&mut state, &model, &latent.y_star, rng)?;
        sample_beta_e(&mut state, &model, &latent.y_star, rng)?;
        sample_scores(&mut state, &model, &latent.y_star, rng)?;
        sample_variances(&mut state, &model, &latent.y_star, rng)?;

        if iter >= config.n_burn {
            let m = iter - config.n_burn;
            let beta = state.data_scale_beta(&model);
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
