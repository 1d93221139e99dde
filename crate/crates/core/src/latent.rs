//! Latent-variable bridge between ordinal outcomes and the Gaussian
//! regression: truncated-normal draws, cut-point updates and probit
//! category probabilities.

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::data::OrdinalFunctionalDataset;
use crate::error::{Error, Result};

/// Standardized distance beyond which the exponential-rejection sampler
/// replaces inverse-CDF sampling.
const TAIL_THRESHOLD: f64 = 4.0;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function, 1 - CDF, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of [`norm_sf`].
pub fn norm_sf_inverse(q: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Probability a standard normal falls in (a, b), computed on whichever
/// side of zero keeps precision.
pub fn norm_interval_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Ordered thresholds c_1 < ... < c_{L-1} with c_1 = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct CutPoints(Vec<f64>);

impl CutPoints {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("need at least one cut point (L >= 2)".into()));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidInput(format!("first cut point must be 0, got {}", values[0])));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("cut points must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// Unit-spaced starting cuts 0, 1, ..., L-2.
    pub fn unit_spaced(n_levels: usize) -> Self {
        Self((0..n_levels - 1).map(|v| v as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn n_levels(&self) -> usize {
        self.0.len() + 1
    }

    /// Lower end of the latent interval of `level` (c_level).
    #[inline]
    pub fn lower(&self, level: usize) -> f64 {
        if level == 0 {
            f64::NEG_INFINITY
        } else {
            self.0[level - 1]
        }
    }

    /// Upper end of the latent interval of `level` (c_{level+1}).
    #[inline]
    pub fn upper(&self, level: usize) -> f64 {
        self.0.get(level).copied().unwrap_or(f64::INFINITY)
    }
}

/// Latent Gaussian matrix Y* together with the current cut points.
#[derive(Clone, Debug)]
pub struct LatentState {
    pub y_star: DMatrix<f64>,
    pub cuts: CutPoints,
}

impl LatentState {
    /// Every latent value at the midpoint of its category's interval under
    /// `cuts`; open-ended categories sit 0.5 inside their finite end.
    pub fn initialize(data: &OrdinalFunctionalDataset, cuts: CutPoints) -> Self {
        let y = data.outcomes();
        let y_star = DMatrix::from_fn(y.nrows(), y.ncols(), |i, t| {
            let l = y[(i, t)];
            let (lo, hi) = (cuts.lower(l), cuts.upper(l));
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (false, _) => hi - 0.5,
                (_, false) => lo + 0.5,
            }
        });
        Self { y_star, cuts }
    }

    /// Checks cut ordering and that every latent value lies in its interval.
    pub fn check(&self, data: &OrdinalFunctionalDataset) -> Result<()> {
        CutPoints::new(self.cuts.0.clone()).map_err(|e| Error::CorruptState(e.to_string()))?;
        let y = data.outcomes();
        for t in 0..y.ncols() {
            for i in 0..y.nrows() {
                let (l, v) = (y[(i, t)], self.y_star[(i, t)]);
                if !(v >= self.cuts.lower(l) && v <= self.cuts.upper(l)) {
                    return Err(Error::CorruptState(format!(
                        "latent ({i},{t}) = {v} outside interval of level {l}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Standard normal truncated to (a, b) by inverse CDF, working on the side
/// of zero that avoids cancellation.
fn truncnorm_inverse_cdf<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let z = if a >= 0.0 {
        let (qa, qb) = (norm_sf(a), norm_sf(b));
        norm_sf_inverse(qa - u * (qa - qb))
    } else {
        let (pa, pb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile(pa + u * (pb - pa))
    };
    z.clamp(a, b)
}

/// Standard normal truncated to (a, b) with a far in the upper tail, by
/// rejection from a translated exponential.
fn truncnorm_upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let width = b - a;
    // Mass of the exponential proposal beyond b, excluded by inversion.
    let keep = if width.is_finite() { -(-rate * width).exp_m1() } else { 1.0 };
    loop {
        let u: f64 = rng.random();
        let z = a - (-u * keep).ln_1p() / rate;
        let accept: f64 = rng.random();
        let d = z - rate;
        if accept.ln() <= -0.5 * d * d && z <= b {
            return z;
        }
    }
}

/// Draws from N(0,1) restricted to (a, b).
pub fn std_truncnorm<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TAIL_THRESHOLD {
        truncnorm_upper_tail(a, b, rng)
    } else if b <= -TAIL_THRESHOLD {
        -truncnorm_upper_tail(-b, -a, rng)
    } else {
        truncnorm_inverse_cdf(a, b, rng)
    }
}

/// Draws from N(mean, sd^2) conditioned on (lower, upper); either bound may
/// be infinite.
pub fn rtruncnorm<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::InvalidInput(format!("empty truncation interval ({lower}, {upper})")));
    }
    if !(sd > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput(format!("invalid normal parameters mean={mean}, sd={sd}")));
    }
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    Ok((mean + sd * std_truncnorm(a, b, rng)).clamp(lower, upper))
}

/// Redraws every latent value from N(mean, 1) truncated to its category's
/// interval. `mean` must be on the data scale.
pub fn sample_latent<R: Rng + ?Sized>(
    state: &mut LatentState,
    mean: &DMatrix<f64>,
    data: &OrdinalFunctionalDataset,
    rng: &mut R,
) -> Result<()> {
    let y = data.outcomes();
    if mean.shape() != y.shape() || state.y_star.shape() != y.shape() {
        return Err(Error::Dimension("latent mean does not match outcome shape".into()));
    }
    for t in 0..y.ncols() {
        for i in 0..y.nrows() {
            let l = y[(i, t)];
            state.y_star[(i, t)] = rtruncnorm(mean[(i, t)], 1.0, state.cuts.lower(l), state.cuts.upper(l), rng)?;
        }
    }
    Ok(())
}

/// Per-level extremes of the latent values: (max, min) with -inf / +inf for
/// levels that never occur.
pub fn level_extremes(state: &LatentState, data: &OrdinalFunctionalDataset) -> Vec<(f64, f64)> {
    let mut ext = vec![(f64::NEG_INFINITY, f64::INFINITY); data.n_levels()];
    for (l, v) in data.outcomes().iter().zip(state.y_star.iter()) {
        let e = &mut ext[*l];
        e.0 = e.0.max(*v);
        e.1 = e.1.min(*v);
    }
    ext
}

/// Gibbs update of the free cut points c_2, ..., c_{L-1}, in ascending
/// order, each from its uniform full conditional. A cut with no finite
/// upper bound (every level above it empty) is left where it is.
pub fn sample_cutpoints<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &OrdinalFunctionalDataset,
    rng: &mut R,
) -> Result<()> {
    let n_levels = data.n_levels();
    if n_levels <= 2 {
        return Ok(());
    }
    let ext = level_extremes(state, data);
    for idx in 1..n_levels - 1 {
        // Stored value idx is c_{idx+1}: it separates level idx from idx + 1.
        let below = ext[idx].0;
        let above = ext[idx + 1].1;
        let a = below.max(state.cuts.0[idx - 1]);
        let b = above.min(state.cuts.0.get(idx + 1).copied().unwrap_or(f64::INFINITY));
        if !(a < b) {
            return Err(Error::CorruptState(format!(
                "cut point {} has empty conditional support ({a}, {b})",
                idx + 1
            )));
        }
        if b.is_infinite() {
            continue;
        }
        state.cuts.0[idx] = a + (b - a) * rng.random::<f64>();
        if !(state.cuts.0[idx] > a && state.cuts.0[idx] < b) {
            state.cuts.0[idx] = 0.5 * (a + b);
        }
    }
    Ok(())
}

/// Log-likelihood of the outcomes given the cut points and the latent
/// mean, with the latent values integrated out.
pub fn cut_log_likelihood(cuts: &[f64], mean: &DMatrix<f64>, data: &OrdinalFunctionalDataset) -> f64 {
    let lower = |l: usize| if l == 0 { f64::NEG_INFINITY } else { cuts[l - 1] };
    let upper = |l: usize| cuts.get(l).copied().unwrap_or(f64::INFINITY);
    data.outcomes()
        .iter()
        .zip(mean.iter())
        .map(|(&l, &eta)| norm_interval_prob(lower(l) - eta, upper(l) - eta).ln())
        .sum()
}

/// Random-walk scale for the collapsed cut-point move, tuned toward a
/// target acceptance rate while adaptation is on.
#[derive(Clone, Debug)]
pub struct CutTuner {
    pub log_step: f64,
    accepted: usize,
    tried: usize,
    batches: usize,
}

impl CutTuner {
    const TARGET: f64 = 0.3;
    const BATCH: usize = 50;

    pub fn new(step: f64) -> Self {
        CutTuner {
            log_step: step.ln(),
            accepted: 0,
            tried: 0,
            batches: 0,
        }
    }

    /// Starting scale of order 1/sqrt(number of observations).
    pub fn for_data(data: &OrdinalFunctionalDataset) -> Self {
        let n_obs = (data.n_subjects() * data.n_timepoints()) as f64;
        Self::new(1.0 / n_obs.sqrt())
    }

    fn record(&mut self, accepted: bool, adapt: bool) {
        self.tried += 1;
        self.accepted += accepted as usize;
        if adapt && self.tried == Self::BATCH {
            self.batches += 1;
            let delta = (1.0 / (self.batches as f64).sqrt()).min(0.2);
            let rate = self.accepted as f64 / self.tried as f64;
            self.log_step += if rate > Self::TARGET { delta } else { -delta };
        }
        if self.tried == Self::BATCH {
            self.tried = 0;
            self.accepted = 0;
        }
    }
}

/// Metropolis update of all free cut points at once from their
/// distribution given the latent mean, with the latent values integrated
/// out. Proposals are Gaussian steps that must keep the cuts ordered. The
/// latent values are left untouched, so a fresh [`sample_latent`] must
/// follow. Returns whether the move was accepted.
pub fn sample_cutpoints_collapsed<R: Rng + ?Sized>(
    state: &mut LatentState,
    mean: &DMatrix<f64>,
    data: &OrdinalFunctionalDataset,
    tuner: &mut CutTuner,
    adapt: bool,
    rng: &mut R,
) -> Result<bool> {
    if data.n_levels() <= 2 {
        return Ok(false);
    }
    if mean.shape() != data.outcomes().shape() {
        return Err(Error::Dimension("latent mean does not match outcome shape".into()));
    }
    let step = tuner.log_step.exp();
    let current = state.cuts.values().to_vec();
    let mut proposal = current.clone();
    for c in proposal.iter_mut().skip(1) {
        *c += step * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let ordered = proposal.windows(2).all(|w| w[0] < w[1]);
    let mut accept = false;
    if ordered {
        let log_ratio = cut_log_likelihood(&proposal, mean, data) - cut_log_likelihood(&current, mean, data);
        accept = rng.random::<f64>().ln() < log_ratio;
    }
    if accept {
        state.cuts = CutPoints::new(proposal)?;
    }
    tuner.record(accept, adapt);
    Ok(accept)
}

/// P[Y = l] = Phi(c_{l+1} - eta) - Phi(c_l - eta) for l = 0..L-1.
pub fn category_probabilities(linear_predictor: f64, cuts: &CutPoints) -> Vec<f64> {
    (0..cuts.n_levels())
        .map(|l| {
            let lo = cuts.lower(l) - linear_predictor;
            let hi = cuts.upper(l) - linear_predictor;
            norm_interval_prob(lo, hi).max(0.0)
        })
        .collect()
}

/// Most probable level; ties go to the lower level.
pub fn predict_category(linear_predictor: f64, cuts: &CutPoints) -> usize {
    let probs = category_probabilities(linear_predictor, cuts);
    let mut best = 0;
    for (l, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = l;
        }
    }
    best
}
