//! Quadrature over the hyperbolic disk `Ω_{0,R} = { |z| <= tanh R }`.
//!
//! Centers are spread by farthest-point sampling under the hyperbolic
//! distance over a dense polar lattice; each center's weight is the exact
//! hyperbolic area of the lattice cells closest to it.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hyperbolic::hyperbolic_disk_area;

/// Radial and angular resolution of the lattice the Voronoi cells are
/// integrated on.
pub const ORACLE_RADIAL: usize = 400;
pub const ORACLE_ANGULAR: usize = 400;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub radius: f64,
    pub euclidean_radius: f64,
    pub centers: Vec<Complex64>,
    pub weights: Vec<f64>,
    /// Largest hyperbolic distance from a lattice point to its nearest center.
    pub fill_distance: f64,
}

struct Lattice {
    points: Vec<Complex64>,
    volumes: Vec<f64>,
}

fn lattice(radius: f64, n_radial: usize, n_angular: usize) -> Lattice {
    let d_theta = std::f64::consts::TAU / n_angular as f64;
    let mut points = Vec::with_capacity(n_radial * n_angular);
    let mut volumes = Vec::with_capacity(n_radial * n_angular);
    for b in 0..n_radial {
        let rho0 = radius * b as f64 / n_radial as f64;
        let rho1 = radius * (b + 1) as f64 / n_radial as f64;
        let r_mid = (0.5 * (rho0 + rho1)).tanh();
        // ∫ r (1 - r^2)^{-2} dr = cosh^2(rho) / 2
        let ring = 0.5 * (rho1.sinh().powi(2) - rho0.sinh().powi(2)) * d_theta;
        for t in 0..n_angular {
            points.push(Complex64::from_polar(r_mid, (t as f64 + 0.5) * d_theta));
            volumes.push(ring);
        }
    }
    Lattice { points, volumes }
}

#[inline]
fn pseudo_dist_sq(z: Complex64, w: Complex64) -> f64 {
    (z - w).norm_sqr() / (1.0 - w.conj() * z).norm_sqr()
}

impl QuadratureGrid {
    pub fn build(radius: f64, count: usize, seed: u64) -> QuadratureGrid {
        Self::build_with_lattice(radius, count, seed, ORACLE_RADIAL, ORACLE_ANGULAR)
    }

    pub fn build_with_lattice(radius: f64, count: usize, seed: u64, n_radial: usize, n_angular: usize) -> QuadratureGrid {
        assert!(radius > 0.0, "quadrature radius must be positive");
        assert!(count >= 1, "quadrature needs at least one center");
        let lat = lattice(radius, n_radial, n_angular);
        let n = lat.points.len();
        assert!(count <= n, "more centers than lattice cells");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = lat.points[rng.gen_range(0..n)];
        let mut best = argmax((0..n).map(|i| pseudo_dist_sq(lat.points[i], start)));

        let mut min_d = vec![f64::INFINITY; n];
        let mut label = vec![0usize; n];
        let mut centers = Vec::with_capacity(count);
        for k in 0..count {
            let c = lat.points[best];
            centers.push(c);
            for i in 0..n {
                let d = pseudo_dist_sq(lat.points[i], c);
                if d < min_d[i] {
                    min_d[i] = d;
                    label[i] = k;
                }
            }
            best = argmax(min_d.iter().copied());
        }
        let mut weights = vec![0.0; count];
        for i in 0..n {
            weights[label[i]] += lat.volumes[i];
        }
        let fill_distance = min_d[best].sqrt().min(1.0).atanh();
        QuadratureGrid {
            radius,
            euclidean_radius: radius.tanh(),
            centers,
            weights,
            fill_distance,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_k α_k f(p_k)`.
    pub fn integrate(&self, f: impl Fn(Complex64) -> f64) -> f64 {
        self.centers.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    /// Exact hyperbolic area of `Ω_{0,R}`.
    pub fn area(&self) -> f64 {
        hyperbolic_disk_area(self.radius)
    }
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn build_quadrature(radius: f64, count: usize, seed: u64) -> QuadratureGrid {
    QuadratureGrid::build(radius, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{hyperbolic_distance, DiskMobius};
    use std::f64::consts::PI;

    #[test]
    fn single_center_carries_whole_area() {
        let g = QuadratureGrid::build(1.0, 1, 0);
        assert_eq!(g.len(), 1);
        assert!((g.weights[0] - PI * 1f64.sinh().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_disk_area() {
        let g = QuadratureGrid::build(1.0, 100, 7);
        let exact = PI * 1f64.sinh().powi(2);
        assert!((exact - 4.3388).abs() < 1e-4);
        assert!((g.total_weight() - exact).abs() <= 1e-3 * exact);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!(g.centers.iter().all(|c| c.norm() <= g.euclidean_radius));
    }

    #[test]
    fn deterministic_for_fixed_inputs() {
        let a = QuadratureGrid::build(0.8, 60, 11);
        let b = QuadratureGrid::build(0.8, 60, 11);
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn mobius_maps_neighborhoods_onto_neighborhoods() {
        let r = 1.0;
        let g = QuadratureGrid::build_with_lattice(r, 200, 3, 100, 100);
        let z = Complex64::new(0.3, -0.5);
        let w = Complex64::new(-0.6, 0.2);
        let to_z = DiskMobius::base(z);
        for k in 0..8 {
            let m = DiskMobius::family(z, w, Complex64::from_polar(1.0, k as f64));
            for &p in &g.centers {
                let q = to_z.apply(p);
                assert!(hyperbolic_distance(z, q) <= r + 1e-9);
                assert!(hyperbolic_distance(w, m.apply(q)) <= r + 1e-9);
            }
        }
    }
}
