//! Consistency scoring of correspondences through the spread of their
//! minimizing Möbius transformations.
//!
//! Each map is represented by a determinant-one matrix, defined up to sign.
//! The score of a pair is the sum of its matrix distances to all other
//! pairs, each distance minimized over the sign.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperbolic::DiskMobius;
use crate::local_distance::CostMatrix;

pub type Sl2 = [[Complex64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("at least two pairs are needed to score consistency, got {0}")]
    TooFewPairs(usize),
    #[error("asked for {k} pairs out of {available}")]
    TooManyRequested { k: usize, available: usize },
    #[error("pair ({0}, {1}) lies outside the cost matrix")]
    PairOutOfRange(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCorrespondence {
    pub i: usize,
    pub j: usize,
    pub mobius: DiskMobius,
    pub local_cost: f64,
    pub variance: f64,
}

fn sign_key(m: &Sl2) -> bool {
    let tr = m[0][0] + m[1][1];
    if tr.re != 0.0 {
        return tr.re > 0.0;
    }
    if tr.im != 0.0 {
        return tr.im > 0.0;
    }
    let first = m.iter().flatten().find(|z| **z != Complex64::new(0.0, 0.0)).copied().unwrap_or_default();
    if first.re != 0.0 {
        first.re > 0.0
    } else {
        first.im >= 0.0
    }
}

/// `[[τ, -τa], [-ā, 1]] / sqrt(τ(1 - |a|^2))`, signed so the trace has
/// nonnegative real part (then imaginary part, then first nonzero entry).
pub fn mobius_to_sl2(m: &DiskMobius) -> Sl2 {
    let mut mat = m.matrix();
    let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
    let root = det.sqrt();
    mat.iter_mut().flatten().for_each(|z| *z /= root);
    if !sign_key(&mat) {
        mat.iter_mut().flatten().for_each(|z| *z = -*z);
    }
    mat
}

fn frobenius(a: &Sl2, b: &Sl2, sign: f64) -> f64 {
    let mut s = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            s += (a[r][c] - b[r][c] * sign).norm_sqr();
        }
    }
    s.sqrt()
}

/// `min(‖A - B‖_F, ‖A + B‖_F)`.
pub fn sl2_distance(a: &Sl2, b: &Sl2) -> f64 {
    frobenius(a, b, 1.0).min(frobenius(a, b, -1.0))
}

/// `E_V` of each map against all others.
pub fn variance_scores(maps: &[DiskMobius]) -> Result<Vec<f64>, ConsistencyError> {
    if maps.len() < 2 {
        return Err(ConsistencyError::TooFewPairs(maps.len()));
    }
    let mats: Vec<Sl2> = maps.iter().map(mobius_to_sl2).collect();
    Ok((0..mats.len())
        .into_par_iter()
        .map(|a| {
            mats.iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, m)| sl2_distance(&mats[a], m))
                .sum()
        })
        .collect())
}

/// Attach minimizing maps, local costs and scores to `pairs`.
pub fn score_correspondences(pairs: &[(usize, usize)], costs: &CostMatrix) -> Result<Vec<ScoredCorrespondence>, ConsistencyError> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= costs.rows() || j >= costs.cols()) {
        return Err(ConsistencyError::PairOutOfRange(i, j));
    }
    let maps: Vec<DiskMobius> = pairs.iter().map(|&(i, j)| costs.mobius[i][j]).collect();
    let scores = variance_scores(&maps)?;
    Ok(pairs
        .iter()
        .zip(maps)
        .zip(scores)
        .map(|((&(i, j), mobius), variance)| ScoredCorrespondence {
            i,
            j,
            mobius,
            local_cost: costs.d[i][j],
            variance,
        })
        .collect())
}

/// The `k` pairs with smallest score, ordered by `(score, i, j)`.
pub fn filter_top(pairs: &[ScoredCorrespondence], k: usize) -> Result<Vec<ScoredCorrespondence>, ConsistencyError> {
    if k > pairs.len() {
        return Err(ConsistencyError::TooManyRequested { k, available: pairs.len() });
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.variance.total_cmp(&b.variance).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    sorted.truncate(k);
    Ok(sorted)
}
