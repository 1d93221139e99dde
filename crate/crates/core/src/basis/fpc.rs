use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Starting values for the fPC block of the spline sampler.
#[derive(Clone, Debug)]
pub struct FpcInit {
    /// N x Kp subject scores, scaled to unit mean square per component.
    pub scores: DMatrix<f64>,
    /// K x Kp basis coefficients of the component curves.
    pub loadings: DMatrix<f64>,
    /// Set when the requested number of components had to be reduced.
    pub warning: Option<String>,
}

/// Rank-`kp` truncated SVD of the residual curves, with the component curves
/// projected onto the columns of `design` by least squares.
pub fn init_fpc(residuals: &DMatrix<f64>, design: &DMatrix<f64>, kp: usize) -> Result<FpcInit> {
    let (n, t) = residuals.shape();
    if design.nrows() != t {
        return Err(Error::Dimension(format!(
            "design has {} rows but residuals have {t} columns",
            design.nrows()
        )));
    }
    if kp == 0 {
        return Err(Error::InvalidInput("need at least one fPC".into()));
    }
    let k = design.ncols();
    let max_rank = n.min(k).min(t);
    let (kp_used, warning) = if kp > max_rank {
        (
            max_rank,
            Some(format!("requested {kp} fPCs but only rank {max_rank} is available; using {max_rank}")),
        )
    } else {
        (kp, None)
    };

    // Leading singular pairs from the eigen-decomposition of the smaller
    // Gram matrix; more dependable than a direct SVD on exactly low-rank
    // input.
    let sqrt_n = (n as f64).sqrt();
    let mut scores = DMatrix::zeros(n, kp_used);
    let mut curves = DMatrix::zeros(t, kp_used);
    let by_rows = n <= t;
    let gram_r = if by_rows {
        residuals * residuals.transpose()
    } else {
        residuals.transpose() * residuals
    };
    let eig = gram_r.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    for (c, &idx) in order.iter().take(kp_used).enumerate() {
        let ev = eig.eigenvalues[idx];
        if !(ev > 1e-20 * top) {
            continue;
        }
        let s = ev.sqrt();
        let vec = eig.eigenvectors.column(idx);
        // u = R v / s or v = R' u / s, whichever side was not decomposed.
        let (u, v) = if by_rows {
            (vec.into_owned(), residuals.transpose() * vec / s)
        } else {
            (residuals * vec / s, vec.into_owned())
        };
        for i in 0..n {
            scores[(i, c)] = u[i] * sqrt_n;
        }
        for j in 0..t {
            curves[(j, c)] = v[j] * s / sqrt_n;
        }
    }
    let gram = design.transpose() * design;
    let rhs = design.transpose() * &curves;
    let loadings = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::RankDeficient(e.to_string()))?,
    };
    Ok(FpcInit {
        scores,
        loadings,
        warning,
    })
}
