use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    #[serde(rename = "bspline")]
    BSpline,
    #[serde(rename = "ospline")]
    OSpline,
    Symmlet,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::BSpline => "bspline",
            BasisKind::OSpline => "ospline",
            BasisKind::Symmlet => "symmlet",
        })
    }
}

/// Boundary handling for the discrete wavelet transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Mirror extension about the half-sample point (x[-1] = x[0]).
    SymmetricHalfpoint,
    /// Circular extension; orthogonal when T is divisible by 2^J.
    Periodic,
}

/// Everything a sampler needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub basis: BasisKind,
    /// Basis functions K for B-splines, interior knots K for O-splines,
    /// decomposition levels J for wavelets.
    pub basis_size: usize,
    /// Number of functional principal components (spline samplers only).
    pub n_fpc: usize,
    /// Total MCMC iterations, burn-in included.
    pub n_samples: usize,
    pub n_burn: usize,
    pub seed: u64,
    /// Weight of the ridge part of the composite B-spline penalty.
    pub eta: f64,
    pub vanishing_moments: usize,
    pub padding: Padding,
}

impl ModelConfig {
    fn with_defaults(basis: BasisKind, basis_size: usize) -> Self {
        Self {
            basis,
            basis_size,
            n_fpc: 2,
            n_samples: 1000,
            n_burn: 500,
            seed: 1,
            eta: 0.01,
            vanishing_moments: 8,
            padding: Padding::SymmetricHalfpoint,
        }
    }

    pub fn bspline(k: usize) -> Self {
        Self::with_defaults(BasisKind::BSpline, k)
    }

    pub fn ospline(k: usize) -> Self {
        Self::with_defaults(BasisKind::OSpline, k)
    }

    pub fn symmlet(levels: usize) -> Self {
        Self::with_defaults(BasisKind::Symmlet, levels)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, n_samples: usize, n_burn: usize) -> Self {
        self.n_samples = n_samples;
        self.n_burn = n_burn;
        self
    }

    pub fn n_keep(&self) -> usize {
        self.n_samples - self.n_burn
    }

    /// Short label such as `ospline_K2` or `symmlet_J6`.
    pub fn label(&self) -> String {
        match self.basis {
            BasisKind::Symmlet => format!("symmlet_J{}", self.basis_size),
            b => format!("{b}_K{}", self.basis_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_samples {
            return Err(Error::InvalidInput(format!(
                "--burn ({}) must be smaller than --samples ({})",
                self.n_burn, self.n_samples
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!("--eta must lie in (0,1), got {}", self.eta)));
        }
        match self.basis {
            BasisKind::BSpline | BasisKind::OSpline => {
                let min = if self.basis == BasisKind::BSpline { 4 } else { 2 };
                if self.basis_size < min {
                    return Err(Error::InvalidInput(format!(
                        "--k must be at least {min} for {}, got {}",
                        self.basis, self.basis_size
                    )));
                }
                if self.n_fpc == 0 {
                    return Err(Error::InvalidInput("--kp must be at least 1".into()));
                }
            }
            BasisKind::Symmlet => {
                if self.basis_size == 0 {
                    return Err(Error::InvalidInput("--levels must be at least 1".into()));
                }
                if self.vanishing_moments == 0 {
                    return Err(Error::InvalidInput("vanishing moments must be positive".into()));
                }
            }
        }
        Ok(())
    }
}
