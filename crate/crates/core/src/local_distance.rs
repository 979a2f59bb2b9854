//! Möbius-invariant local dissimilarity between two disk densities and the
//! transport cost matrix built from it.
//!
//! For samples `z` and `w`, the neighborhood `Ω_{z,R}` is reached through
//! the base map `m̃ = base(z)` and compared against its image under each
//! member `m_ℓ` of the family sending `z` to `w`:
//!
//! `d(z, w) = min_ℓ Σ_k α_k |μ(m̃(p_k)) - ν(m_ℓ(m̃(p_k)))|`,
//! `σ_ℓ = exp(2πiℓ/L)`, `ℓ = 0..L`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::DiskDensity;
use crate::hyperbolic::DiskMobius;
use crate::quadrature::QuadratureGrid;

pub const DEFAULT_MOBIUS_STEPS: usize = 32;
pub const MIN_MOBIUS_STEPS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum LocalDistanceError {
    #[error("at least {MIN_MOBIUS_STEPS} rotation steps are required, got {0}")]
    TooFewSteps(usize),
    #[error("grid radius {grid} does not match configured radius {radius}")]
    RadiusMismatch { grid: f64, radius: f64 },
    #[error("sample sets must be nonempty")]
    EmptySamples,
    #[error("sample point {0} is not inside the unit disk")]
    OutsideDisk(Complex64),
}

#[derive(Debug, Clone)]
pub struct LocalDistanceConfig {
    pub radius: f64,
    pub grid: QuadratureGrid,
    pub steps: usize,
}

impl LocalDistanceConfig {
    pub fn new(grid: QuadratureGrid, steps: usize) -> Result<Self, LocalDistanceError> {
        if steps < MIN_MOBIUS_STEPS {
            return Err(LocalDistanceError::TooFewSteps(steps));
        }
        Ok(LocalDistanceConfig { radius: grid.radius, grid, steps })
    }

    pub fn validate(&self) -> Result<(), LocalDistanceError> {
        if self.steps < MIN_MOBIUS_STEPS {
            return Err(LocalDistanceError::TooFewSteps(self.steps));
        }
        if self.grid.radius != self.radius {
            return Err(LocalDistanceError::RadiusMismatch {
                grid: self.grid.radius,
                radius: self.radius,
            });
        }
        Ok(())
    }

    /// `σ_ℓ = exp(2πiℓ/L)`.
    pub fn sigma(&self, l: usize) -> Complex64 {
        Complex64::from_polar(1.0, std::f64::consts::TAU * l as f64 / self.steps as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDistance {
    pub value: f64,
    pub sigma_index: usize,
    pub mobius: DiskMobius,
}

/// Quadrature nodes of `Ω_{z,R}` and the values of `μ` there.
struct Neighborhood {
    points: Vec<Complex64>,
    mu: Vec<f64>,
}

fn neighborhood<M: DiskDensity + ?Sized>(mu: &M, z: Complex64, grid: &QuadratureGrid) -> Neighborhood {
    let base = DiskMobius::base(z);
    let points: Vec<Complex64> = grid.centers.iter().map(|&p| base.apply(p)).collect();
    let mu = points.iter().map(|&q| mu.eval(q)).collect();
    Neighborhood { points, mu }
}

/// Quadrature points summed for every rotation before any is pruned.
const SCAN_PREFIX_DIVISOR: usize = 8;

/// Partial sum over `k` in `from..to`, stopping early once it exceeds `bound`.
fn accumulate<N: DiskDensity + ?Sized>(hood: &Neighborhood, nu: &N, m: &DiskMobius, weights: &[f64], mut s: f64, from: usize, to: usize, bound: f64) -> f64 {
    for k in from..to {
        s += weights[k] * (hood.mu[k] - nu.eval(m.apply(hood.points[k]))).abs();
        if s > bound {
            break;
        }
    }
    s
}

/// Exact minimum over the `L` rotations, ties to the lowest `ℓ`.
///
/// Every candidate's sum is accumulated in quadrature order, so completed
/// sums are bitwise those of a plain scan. Candidates are visited in order
/// of a prefix sum and abandoned once their partial sum exceeds the best
/// complete one; terms are nonnegative, so no abandoned candidate could win.
fn scan<N: DiskDensity + ?Sized>(hood: &Neighborhood, nu: &N, z: Complex64, w: Complex64, cfg: &LocalDistanceConfig) -> LocalDistance {
    let weights = &cfg.grid.weights;
    let k = weights.len();
    let prefix = (k / SCAN_PREFIX_DIVISOR).max(1).min(k);
    let maps: Vec<DiskMobius> = (0..cfg.steps).map(|l| DiskMobius::family(z, w, cfg.sigma(l))).collect();
    let partial: Vec<f64> = maps.iter().map(|m| accumulate(hood, nu, m, weights, 0.0, 0, prefix, f64::INFINITY)).collect();
    let mut order: Vec<usize> = (0..cfg.steps).collect();
    order.sort_by(|&a, &b| partial[a].total_cmp(&partial[b]).then(a.cmp(&b)));

    let mut best = (f64::INFINITY, usize::MAX);
    for l in order {
        if partial[l] > best.0 {
            break;
        }
        let s = accumulate(hood, nu, &maps[l], weights, partial[l], prefix, k, best.0);
        if s < best.0 || (s == best.0 && l < best.1) {
            best = (s, l);
        }
    }
    let (value, l) = best;
    LocalDistance { value, sigma_index: l, mobius: maps[l] }
}

/// Reference scan over all rotations without pruning.
#[cfg(test)]
fn scan_plain<N: DiskDensity + ?Sized>(hood: &Neighborhood, nu: &N, z: Complex64, w: Complex64, cfg: &LocalDistanceConfig) -> LocalDistance {
    let mut best: Option<LocalDistance> = None;
    for l in 0..cfg.steps {
        let m = DiskMobius::family(z, w, cfg.sigma(l));
        let mut s = 0.0;
        for ((&q, &mu_q), &alpha) in hood.points.iter().zip(&hood.mu).zip(&cfg.grid.weights) {
            s += alpha * (mu_q - nu.eval(m.apply(q))).abs();
        }
        if best.map_or(true, |b| s < b.value) {
            best = Some(LocalDistance { value: s, sigma_index: l, mobius: m });
        }
    }
    best.expect("at least one rotation step")
}

fn check_point(z: Complex64) -> Result<(), LocalDistanceError> {
    if z.norm() < 1.0 {
        Ok(())
    } else {
        Err(LocalDistanceError::OutsideDisk(z))
    }
}

pub fn local_distance<M, N>(mu: &M, nu: &N, z: Complex64, w: Complex64, cfg: &LocalDistanceConfig) -> Result<LocalDistance, LocalDistanceError>
where
    M: DiskDensity + ?Sized,
    N: DiskDensity + ?Sized,
{
    cfg.validate()?;
    check_point(z)?;
    check_point(w)?;
    Ok(scan(&neighborhood(mu, z, &cfg.grid), nu, z, w, cfg))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostMatrix {
    pub d: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<usize>>,
    pub mobius: Vec<Vec<DiskMobius>>,
    pub radius: f64,
    pub quadrature_points: usize,
    pub mobius_steps: usize,
    /// Hyperbolic area of `Ω_{0,R}`; the raw entries are not divided by it.
    pub area: f64,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.d.len()
    }

    pub fn cols(&self) -> usize {
        self.d.first().map_or(0, Vec::len)
    }

    /// Median of all entries.
    pub fn median(&self) -> f64 {
        let mut all: Vec<f64> = self.d.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        let n = all.len();
        if n == 0 {
            0.0
        } else if n % 2 == 1 {
            all[n / 2]
        } else {
            0.5 * (all[n / 2 - 1] + all[n / 2])
        }
    }
}

/// All pairwise local distances. Rows are computed in parallel; every entry
/// is a pure function of its inputs, so the result is independent of
/// scheduling.
pub fn cost_matrix<M, N>(mu: &M, nu: &N, zs: &[Complex64], ws: &[Complex64], cfg: &LocalDistanceConfig) -> Result<CostMatrix, LocalDistanceError>
where
    M: DiskDensity + ?Sized,
    N: DiskDensity + ?Sized,
{
    cfg.validate()?;
    if zs.is_empty() || ws.is_empty() {
        return Err(LocalDistanceError::EmptySamples);
    }
    zs.iter().chain(ws).try_for_each(|&z| check_point(z))?;
    let rows: Vec<Vec<LocalDistance>> = zs
        .par_iter()
        .map(|&z| {
            let hood = neighborhood(mu, z, &cfg.grid);
            ws.iter().map(|&w| scan(&hood, nu, z, w, cfg)).collect()
        })
        .collect();
    Ok(CostMatrix {
        d: rows.iter().map(|r| r.iter().map(|e| e.value).collect()).collect(),
        sigma: rows.iter().map(|r| r.iter().map(|e| e.sigma_index).collect()).collect(),
        mobius: rows.iter().map(|r| r.iter().map(|e| e.mobius).collect()).collect(),
        radius: cfg.radius,
        quadrature_points: cfg.grid.len(),
        mobius_steps: cfg.steps,
        area: cfg.grid.area(),
    })
}
