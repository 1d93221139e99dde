//! Bayesian ordinal probit function-on-scalar regression.
//!
//! Ordinal curves are linked to a latent Gaussian functional regression
//! through ordered cut points. The latent model is fitted either in a
//! wavelet space with spike-and-slab shrinkage or with penalized splines and
//! a functional principal component residual structure.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod config;
pub mod data;
pub mod draws;
pub mod error;
pub mod inference;
pub mod io;
pub mod latent;
pub mod rng;
pub mod sampler_spline;
pub mod sampler_wavelet;
pub mod simulate;

pub use config::{BasisKind, ModelConfig, Padding};
pub use data::{load_dataset, write_dataset, OrdinalFunctionalDataset};
pub use draws::PosteriorDraws;
pub use error::{Error, Result};
pub use rng::{rng_stream, ChainRng};

/// Runs the sampler matching `config.basis` with the chain seeded from
/// `config.seed`.
pub fn fit(data: &OrdinalFunctionalDataset, config: &ModelConfig) -> Result<PosteriorDraws> {
    let mut rng = rng_stream(config.seed, 0);
    fit_with_rng(data, config, &mut rng)
}

pub fn fit_with_rng(data: &OrdinalFunctionalDataset, config: &ModelConfig, rng: &mut ChainRng) -> Result<PosteriorDraws> {
    match config.basis {
        BasisKind::Symmlet => sampler_wavelet::fit_wavelet_with_rng(data, config, rng),
        BasisKind::BSpline | BasisKind::OSpline => sampler_spline::fit_spline_with_rng(data, config, rng),
    }
}
