//! Multilevel discrete wavelet transform with a dense matrix form.
//!
//! Coefficients are laid out coarse to fine: the level-J approximation block
//! first, then detail blocks for levels J, J-1, ..., 1. Scale labels follow
//! the same order, so scale 0 is the approximation block and scale J the
//! finest details.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filters::*;
use crate::config::Padding;
use crate::error::{Error, Result};

const MAX_DENSE_LEN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletFamily {
    Symmlet,
    Daubechies,
    Coiflet,
}

impl WaveletFamily {
    /// Low-pass decomposition filter with the requested number of vanishing
    /// moments of the wavelet.
    pub fn scaling_filter(self, vanishing_moments: usize) -> Result<&'static [f64]> {
        let f: Option<&'static [f64]> = match (self, vanishing_moments) {
            (WaveletFamily::Symmlet, 2) => Some(&SYM2),
            (WaveletFamily::Symmlet, 3) => Some(&SYM3),
            (WaveletFamily::Symmlet, 4) => Some(&SYM4),
            (WaveletFamily::Symmlet, 5) => Some(&SYM5),
            (WaveletFamily::Symmlet, 6) => Some(&SYM6),
            (WaveletFamily::Symmlet, 7) => Some(&SYM7),
            (WaveletFamily::Symmlet, 8) => Some(&SYM8),
            (WaveletFamily::Symmlet, 9) => Some(&SYM9),
            (WaveletFamily::Symmlet, 10) => Some(&SYM10),
            (WaveletFamily::Daubechies, 1) => Some(&DB1),
            (WaveletFamily::Daubechies, 2) => Some(&DB2),
            (WaveletFamily::Daubechies, 3) => Some(&DB3),
            (WaveletFamily::Daubechies, 4) => Some(&DB4),
            (WaveletFamily::Daubechies, 5) => Some(&DB5),
            (WaveletFamily::Daubechies, 6) => Some(&DB6),
            (WaveletFamily::Daubechies, 7) => Some(&DB7),
            (WaveletFamily::Daubechies, 8) => Some(&DB8),
            (WaveletFamily::Daubechies, 9) => Some(&DB9),
            (WaveletFamily::Daubechies, 10) => Some(&DB10),
            (WaveletFamily::Coiflet, 2) => Some(&COIF1),
            (WaveletFamily::Coiflet, 4) => Some(&COIF2),
            (WaveletFamily::Coiflet, 6) => Some(&COIF3),
            (WaveletFamily::Coiflet, 8) => Some(&COIF4),
            (WaveletFamily::Coiflet, 10) => Some(&COIF5),
            _ => None,
        };
        f.ok_or_else(|| {
            Error::InvalidInput(format!(
                "no {self:?} filter with {vanishing_moments} vanishing moments"
            ))
        })
    }
}

/// Quadrature-mirror high-pass partner of an orthogonal low-pass filter.
pub fn wavelet_filter(scaling: &[f64]) -> Vec<f64> {
    let f = scaling.len();
    (0..f)
        .map(|k| {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sign * scaling[f - 1 - k]
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WaveletTransform {
    family: WaveletFamily,
    vanishing_moments: usize,
    levels: usize,
    padding: Padding,
    len: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Approximation length after each level; entry 0 is the signal length.
    approx_lens: Vec<usize>,
    /// Detail length at each level (index 0 = level 1).
    detail_lens: Vec<usize>,
    index_map: Vec<(usize, usize)>,
}

impl WaveletTransform {
    pub fn new(
        family: WaveletFamily,
        vanishing_moments: usize,
        levels: usize,
        padding: Padding,
        len: usize,
    ) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("signal length must be positive".into()));
        }
        let lo = family.scaling_filter(vanishing_moments)?.to_vec();
        let hi = wavelet_filter(&lo);
        // A single sample has nothing to decompose.
        let levels = if len == 1 { 0 } else { levels };
        let f = lo.len();
        let mut approx_lens = vec![len];
        let mut detail_lens = Vec::with_capacity(levels);
        for level in 0..levels {
            let n = approx_lens[level];
            let next = match padding {
                Padding::SymmetricHalfpoint => (n + f - 1) / 2,
                Padding::Periodic => {
                    if n % 2 != 0 {
                        return Err(Error::InvalidInput(format!(
                            "periodic padding needs T divisible by 2^{levels}; T = {len}"
                        )));
                    }
                    n / 2
                }
            };
            approx_lens.push(next);
            detail_lens.push(next);
        }
        let mut index_map = Vec::new();
        index_map.extend((0..approx_lens[levels]).map(|k| (0, k)));
        for (scale, level) in (1..=levels).rev().enumerate() {
            index_map.extend((0..detail_lens[level - 1]).map(|k| (scale + 1, k)));
        }
        Ok(Self {
            family,
            vanishing_moments,
            levels,
            padding,
            len,
            lo,
            hi,
            approx_lens,
            detail_lens,
            index_map,
        })
    }

    /// The default transform: Symmlet with symmetric half-point padding.
    pub fn symmlet(vanishing_moments: usize, levels: usize, padding: Padding, len: usize) -> Result<Self> {
        Self::new(WaveletFamily::Symmlet, vanishing_moments, levels, padding, len)
    }

    pub fn family(&self) -> WaveletFamily {
        self.family
    }

    pub fn vanishing_moments(&self) -> usize {
        self.vanishing_moments
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Signal length T.
    pub fn signal_len(&self) -> usize {
        self.len
    }

    /// Coefficient count T*.
    pub fn n_coeffs(&self) -> usize {
        self.index_map.len()
    }

    /// (scale, location) of every coefficient.
    pub fn index_map(&self) -> &[(usize, usize)] {
        &self.index_map
    }

    /// Number of distinct scales (J detail scales plus the approximation).
    pub fn n_scales(&self) -> usize {
        self.levels + 1
    }

    pub fn scaling_filter(&self) -> &[f64] {
        &self.lo
    }

    pub fn forward(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.len() != self.len {
            return Err(Error::Dimension(format!(
                "signal has length {}, transform expects {}",
                signal.len(),
                self.len
            )));
        }
        let mut out = vec![0.0; self.n_coeffs()];
        self.forward_into(signal, &mut out);
        Ok(out)
    }

    /// Forward transform into a preallocated buffer of length T*.
    pub fn forward_into(&self, signal: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_coeffs());
        let mut approx = signal.to_vec();
        let mut end = out.len();
        for level in 0..self.levels {
            let m = self.approx_lens[level + 1];
            let mut a = vec![0.0; m];
            let start = end - m;
            self.analysis_step(&approx, &mut a, &mut out[start..end]);
            end = start;
            approx = a;
        }
        out[..end].copy_from_slice(&approx);
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n_coeffs() {
            return Err(Error::Dimension(format!(
                "coefficient vector has length {}, transform has {}",
                coeffs.len(),
                self.n_coeffs()
            )));
        }
        let mut out = vec![0.0; self.len];
        self.inverse_into(coeffs, &mut out);
        Ok(out)
    }

    /// Fast inverse transform (synthesis filter bank) into a length-T buffer.
    pub fn inverse_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len);
        let mut start = self.approx_lens[self.levels];
        let mut approx = coeffs[..start].to_vec();
        for level in (1..=self.levels).rev() {
            let m = self.detail_lens[level - 1];
            let detail = &coeffs[start..start + m];
            start += m;
            let mut rec = vec![0.0; self.approx_lens[level - 1]];
            self.synthesis_step(&approx, detail, &mut rec);
            approx = rec;
        }
        out.copy_from_slice(&approx);
    }

    fn analysis_step(&self, x: &[f64], approx: &mut [f64], detail: &mut [f64]) {
        let n = x.len() as isize;
        let f = self.lo.len();
        for o in 0..approx.len() {
            let (mut a, mut d) = (0.0, 0.0);
            let centre = 2 * o as isize + 1;
            for j in 0..f {
                let v = x[self.extend(centre - j as isize, n)];
                a += self.lo[j] * v;
                d += self.hi[j] * v;
            }
            approx[o] = a;
            detail[o] = d;
        }
    }

    fn synthesis_step(&self, approx: &[f64], detail: &[f64], out: &mut [f64]) {
        let f = self.lo.len() as isize;
        match self.padding {
            Padding::SymmetricHalfpoint => {
                // Synthesis is the adjoint of analysis over the extended signal,
                // read back on the original support.
                for (i, slot) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in 0..approx.len() {
                        let j = 2 * k as isize + 1 - i as isize;
                        if (0..f).contains(&j) {
                            acc += self.lo[j as usize] * approx[k] + self.hi[j as usize] * detail[k];
                        }
                    }
                    *slot = acc;
                }
            }
            Padding::Periodic => {
                let n = out.len() as isize;
                out.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..approx.len() {
                    let centre = 2 * k as isize + 1;
                    for j in 0..f {
                        let idx = (centre - j).rem_euclid(n) as usize;
                        out[idx] += self.lo[j as usize] * approx[k] + self.hi[j as usize] * detail[k];
                    }
                }
            }
        }
    }

    #[inline]
    fn extend(&self, idx: isize, n: isize) -> usize {
        match self.padding {
            Padding::SymmetricHalfpoint => {
                let m = idx.rem_euclid(2 * n);
                (if m < n { m } else { 2 * n - 1 - m }) as usize
            }
            Padding::Periodic => idx.rem_euclid(n) as usize,
        }
    }

    /// Dense T* x T matrix W with coefficients = W * signal.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        if self.len > MAX_DENSE_LEN {
            return Err(Error::TooLarge(format!(
                "dense wavelet matrix limited to T <= {MAX_DENSE_LEN}, got {}",
                self.len
            )));
        }
        let mut w = DMatrix::zeros(self.n_coeffs(), self.len);
        let mut e = vec![0.0; self.len];
        let mut col = vec![0.0; self.n_coeffs()];
        for r in 0..self.len {
            e[r] = 1.0;
            self.forward_into(&e, &mut col);
            w.column_mut(r).copy_from_slice(&col);
            e[r] = 0.0;
        }
        Ok(w)
    }

    /// Dense T x T* matrix of the fast inverse.
    pub fn inverse_matrix(&self) -> Result<DMatrix<f64>> {
        if self.len > MAX_DENSE_LEN {
            return Err(Error::TooLarge(format!(
                "dense wavelet matrix limited to T <= {MAX_DENSE_LEN}, got {}",
                self.len
            )));
        }
        let mut w = DMatrix::zeros(self.len, self.n_coeffs());
        let mut e = vec![0.0; self.n_coeffs()];
        let mut col = vec![0.0; self.len];
        for c in 0..self.n_coeffs() {
            e[c] = 1.0;
            self.inverse_into(&e, &mut col);
            w.column_mut(c).copy_from_slice(&col);
            e[c] = 0.0;
        }
        Ok(w)
    }
}
