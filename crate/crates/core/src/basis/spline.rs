//! Cubic B-spline designs with composite difference penalties (B-splines)
//! or exact integrated squared second-derivative penalties (O-splines).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplineKind {
    #[serde(rename = "bspline")]
    BSpline,
    #[serde(rename = "ospline")]
    OSpline,
}

#[derive(Clone, Debug)]
pub struct SplineBasis {
    pub kind: SplineKind,
    /// T x K_total design evaluated on the time grid.
    pub design: DMatrix<f64>,
    /// K_total x K_total symmetric positive semidefinite penalty.
    pub penalty: DMatrix<f64>,
    /// Full clamped knot sequence (boundary knots repeated four times).
    pub knots: Vec<f64>,
}

impl SplineBasis {
    pub fn n_basis(&self) -> usize {
        self.design.ncols()
    }

    /// Evaluates a coefficient vector on the grid: Theta * coef.
    pub fn curve(&self, coef: &[f64]) -> Vec<f64> {
        let c = nalgebra::DVector::from_column_slice(coef);
        (&self.design * c).iter().copied().collect()
    }
}

/// Clamped cubic knot sequence with `k` equally spaced interior knots over
/// the grid range, giving `k + 4` basis functions.
pub fn clamped_knots(grid: &[f64], k: usize) -> Result<Vec<f64>> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing with at least two points".into()));
    }
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let mut knots = vec![a; DEGREE + 1];
    knots.extend((1..=k).map(|i| a + (b - a) * i as f64 / (k + 1) as f64));
    knots.extend(std::iter::repeat_n(b, DEGREE + 1));
    Ok(knots)
}

/// Index `s` with knots[s] <= x < knots[s+1]; the right end maps to the
/// last non-empty interval.
fn find_span(knots: &[f64], x: f64) -> usize {
    let n_basis = knots.len() - DEGREE - 1;
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    let mut s = DEGREE;
    while s + 1 < knots.len() && knots[s + 1] <= x {
        s += 1;
    }
    s
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Values, first and second derivatives of all cubic basis functions at
/// `x`, evaluated with the polynomial piece belonging to `span`.
pub(crate) fn eval_in_span(knots: &[f64], span: usize, x: f64) -> [Vec<f64>; 3] {
    let m = knots.len();
    // b[d][i] = B_{i,d}(x), defined for i < m - d - 1.
    let mut b: Vec<Vec<f64>> = Vec::with_capacity(DEGREE + 1);
    let mut b0 = vec![0.0; m - 1];
    b0[span] = 1.0;
    b.push(b0);
    for d in 1..=DEGREE {
        let prev = &b[d - 1];
        let cur: Vec<f64> = (0..m - d - 1)
            .map(|i| {
                ratio(x - knots[i], knots[i + d] - knots[i]) * prev[i]
                    + ratio(knots[i + d + 1] - x, knots[i + d + 1] - knots[i + 1]) * prev[i + 1]
            })
            .collect();
        b.push(cur);
    }
    let deriv = |lower: &[f64], d: usize| -> Vec<f64> {
        (0..m - d - 1)
            .map(|i| {
                d as f64
                    * (ratio(lower[i], knots[i + d] - knots[i])
                        - ratio(lower[i + 1], knots[i + d + 1] - knots[i + 1]))
            })
            .collect()
    };
    let d1_deg2 = deriv(&b[1], 2);
    let d1 = deriv(&b[2], 3);
    let d2 = deriv(&d1_deg2, 3);
    [b[3].clone(), d1, d2]
}

fn design_matrix(grid: &[f64], knots: &[f64]) -> DMatrix<f64> {
    let n_basis = knots.len() - DEGREE - 1;
    let mut design = DMatrix::zeros(grid.len(), n_basis);
    for (r, &x) in grid.iter().enumerate() {
        let [vals, _, _] = eval_in_span(knots, find_span(knots, x), x);
        for (c, v) in vals.into_iter().enumerate() {
            design[(r, c)] = v;
        }
    }
    design
}

/// Second-difference operator D2 with `n - 2` rows.
pub fn second_difference(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n.saturating_sub(2), n);
    for r in 0..n.saturating_sub(2) {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d
}

/// Cubic B-spline design with `k` basis functions (k - 4 interior knots)
/// and penalty eta * I + (1 - eta) * D2'D2.
pub fn bspline_design(grid: &[f64], k: usize, eta: f64) -> Result<SplineBasis> {
    if k < DEGREE + 1 {
        return Err(Error::InvalidInput(format!(
            "cubic B-splines need at least 4 basis functions, got {k}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0,1), got {eta}")));
    }
    let knots = clamped_knots(grid, k - DEGREE - 1)?;
    let design = design_matrix(grid, &knots);
    let n = design.ncols();
    let d2 = second_difference(n);
    let penalty = DMatrix::identity(n, n) * eta + (d2.transpose() * &d2) * (1.0 - eta);
    Ok(SplineBasis {
        kind: SplineKind::BSpline,
        design,
        penalty,
        knots,
    })
}

/// O'Sullivan penalty: entry (d, d') is the integral of the product of the
/// second derivatives over the knot range. Second derivatives of cubics are
/// linear on each knot interval, so Simpson's rule per interval is exact.
pub fn ospline_penalty(knots: &[f64]) -> DMatrix<f64> {
    let n = knots.len() - DEGREE - 1;
    let mut penalty = DMatrix::zeros(n, n);
    for s in DEGREE..n {
        let (lo, hi) = (knots[s], knots[s + 1]);
        let h = hi - lo;
        if h <= 0.0 {
            continue;
        }
        let weights = [h / 6.0, 4.0 * h / 6.0, h / 6.0];
        for (x, w) in [lo, 0.5 * (lo + hi), hi].into_iter().zip(weights) {
            let [_, _, d2] = eval_in_span(knots, s, x);
            for i in s - DEGREE..=s {
                for j in s - DEGREE..=s {
                    penalty[(i, j)] += w * d2[i] * d2[j];
                }
            }
        }
    }
    // Exact symmetry regardless of summation order.
    (&penalty + penalty.transpose()) * 0.5
}

/// Cubic O-spline design with `k` interior knots, so `k + 4` basis functions.
pub fn ospline_design(grid: &[f64], k: usize) -> Result<SplineBasis> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("O-splines need at least 2 interior knots, got {k}")));
    }
    let knots = clamped_knots(grid, k)?;
    let design = design_matrix(grid, &knots);
    let penalty = ospline_penalty(&knots);
    Ok(SplineBasis {
        kind: SplineKind::OSpline,
        design,
        penalty,
        knots,
    })
}

/// Second derivatives of all basis functions at an arbitrary point.
pub fn second_derivatives(knots: &[f64], x: f64) -> Vec<f64> {
    let [_, _, d2] = eval_in_span(knots, find_span(knots, x), x);
    d2
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn grid(t: usize) -> Vec<f64> {
        (1..=t).map(|v| v as f64).collect()
    }

    fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        (v.transpose() * m * v)[(0, 0)]
    }

    #[test]
    fn partition_of_unity() {
        for k in [4, 5, 10] {
            let b = bspline_design(&grid(256), k, 0.01).unwrap();
            assert_eq!(b.n_basis(), k);
            for r in 0..256 {
                let s: f64 = b.design.row(r).sum();
                assert!((s - 1.0).abs() < 1e-12, "row {r}: {s}");
            }
        }
    }

    #[test]
    fn second_differences_vanish_on_lines() {
        let b = bspline_design(&grid(100), 10, 0.01).unwrap();
        let n = b.n_basis();
        let d2 = second_difference(n);
        let line = DVector::from_fn(n, |i, _| 0.3 - 1.7 * i as f64);
        assert!(quad_form(&(d2.transpose() * &d2), &line).abs() < 1e-12);
    }

    #[test]
    fn composite_penalty_positive_definite() {
        let b = bspline_design(&grid(256), 10, 0.01).unwrap();
        let eig = b.penalty.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        // eta * I contributes exactly eta to every eigenvalue of a PSD D2'D2.
        assert!(min >= 0.01 - 1e-12, "min eigenvalue {min}");
    }

    #[test]
    fn ospline_penalty_kills_linear_functions() {
        let g = grid(256);
        for k in [2, 4, 10] {
            let b = ospline_design(&g, k).unwrap();
            let n = b.n_basis();
            // Greville abscissae reproduce linear functions exactly.
            let greville: Vec<f64> = (0..n).map(|i| (b.knots[i + 1] + b.knots[i + 2] + b.knots[i + 3]) / 3.0).collect();
            let constant = DVector::from_element(n, 1.0);
            let linear = DVector::from_vec(greville);
            assert!(quad_form(&b.penalty, &constant).abs() < 1e-10);
            assert!(quad_form(&b.penalty, &linear).abs() < 1e-10);
            let fitted = &b.design * &linear;
            for (t, v) in fitted.iter().enumerate() {
                assert!((v - g[t]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ospline_penalty_symmetric_with_rank_deficiency_two() {
        let b = ospline_design(&grid(256), 4).unwrap();
        let n = b.n_basis();
        assert_eq!(b.penalty, b.penalty.transpose());
        let eig = b.penalty.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let null = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-10 * max).count();
        assert_eq!(null, 2);
        assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-10 * max));
        assert_eq!(n, 8);
    }

    #[test]
    fn bspline_k_plus_four_matches_ospline_k() {
        let g: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).powf(1.2)).collect();
        let b = bspline_design(&g, 10, 0.01).unwrap();
        let o = ospline_design(&g, 6).unwrap();
        assert_eq!(b.design, o.design);
    }

    #[test]
    fn too_few_knots() {
        assert!(bspline_design(&grid(20), 3, 0.01).is_err());
        assert!(ospline_design(&grid(20), 1).is_err());
        assert!(ospline_design(&grid(20), 0).is_err());
        assert!(bspline_design(&grid(20), 4, 0.0).is_err());
    }
}
