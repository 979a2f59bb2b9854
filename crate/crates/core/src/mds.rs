//! Classical multidimensional scaling.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MdsError {
    #[error("distance table must be square and nonempty")]
    NotSquare,
    #[error("distance table must be symmetric, nonnegative and finite")]
    Invalid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    /// One row per item.
    pub coords: Vec<Vec<f64>>,
    /// Eigenvalues of the double-centered Gram matrix used for each axis.
    pub eigenvalues: Vec<f64>,
    /// Axes filled with zeros for lack of positive eigenvalues.
    pub padded_axes: usize,
}

/// Double-center `-D^2/2`, keep the `dim` largest eigenpairs and scale the
/// eigenvectors by `sqrt(λ)`. Each axis is signed so that its first
/// nonzero coordinate is positive.
pub fn mds_embed(d: &[Vec<f64>], dim: usize) -> Result<Embedding, MdsError> {
    let n = d.len();
    if n == 0 || d.iter().any(|r| r.len() != n) {
        return Err(MdsError::NotSquare);
    }
    let scale = d.iter().flatten().fold(0.0f64, |a, &x| a.max(x.abs()));
    for i in 0..n {
        for j in 0..n {
            if !d[i][j].is_finite() || d[i][j] < 0.0 || (d[i][j] - d[j][i]).abs() > 1e-12 * scale.max(1.0) {
                return Err(MdsError::Invalid);
            }
        }
    }
    let sq = DMatrix::from_fn(n, n, |i, j| d[i][j] * d[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let tol = 1e-12 * eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut coords = vec![vec![0.0; dim]; n];
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut padded_axes = 0;
    for axis in 0..dim {
        let Some(&k) = order.get(axis) else {
            padded_axes += 1;
            eigenvalues.push(0.0);
            continue;
        };
        let lambda = eig.eigenvalues[k];
        eigenvalues.push(lambda.max(0.0));
        if lambda <= tol {
            padded_axes += 1;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let s = lambda.sqrt();
        let flip = v.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0);
        for i in 0..n {
            coords[i][axis] = if flip { -v[i] } else { v[i] } * s;
        }
    }
    if padded_axes > 0 {
        log::warn!("only {} of {} embedding axes have positive eigenvalues", dim - padded_axes, dim);
    }
    Ok(Embedding { coords, eigenvalues, padded_axes })
}
