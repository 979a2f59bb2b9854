//! Thin-plate-spline densities on the unit disk.
//!
//! `Γ(z) = c0 + c1 x + c2 y + Σ_i b_i ψ(|z - z_i|)` with `ψ(r) = r^2 log r^2`
//! and side conditions `Σ b_i = Σ b_i x_i = Σ b_i y_i = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperbolic::DiskMobius;

/// Clamp value as a fraction of the mean fitted value.
pub const FLOOR_RATIO: f64 = 1e-8;
pub const DEFAULT_LAMBDA: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("need at least 3 non-collinear centers")]
    DegenerateCenters,
    #[error("data points and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("fit system is singular")]
    Singular,
}

/// A positive function on the disk.
pub trait DiskDensity: Sync {
    fn eval(&self, z: Complex64) -> f64;
}

impl<F: Fn(Complex64) -> f64 + Sync> DiskDensity for F {
    fn eval(&self, z: Complex64) -> f64 {
        self(z)
    }
}

/// `w -> μ(m^{-1}(w))`: the density carried along by `m`.
pub struct PushForward<'a, D: DiskDensity + ?Sized> {
    pub inner: &'a D,
    inverse: DiskMobius,
}

impl<'a, D: DiskDensity + ?Sized> PushForward<'a, D> {
    pub fn new(inner: &'a D, m: &DiskMobius) -> Self {
        PushForward { inner, inverse: m.inverse() }
    }
}

impl<D: DiskDensity + ?Sized> DiskDensity for PushForward<'_, D> {
    fn eval(&self, z: Complex64) -> f64 {
        self.inner.eval(self.inverse.apply(z))
    }
}

#[inline]
pub fn tps_kernel(r: f64) -> f64 {
    tps_kernel_sq(r * r)
}

/// `ψ` as a function of `r^2`.
#[inline(always)]
pub fn tps_kernel_sq(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// `Σ_i b_i ψ(|z - c_i|)`, summed in four independent lanes so the
/// logarithms do not serialize on one accumulator.
pub fn kernel_sum(z: Complex64, centers: &[Complex64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut cc = centers.chunks_exact(4);
    let mut bb = b.chunks_exact(4);
    for (c4, b4) in (&mut cc).zip(&mut bb) {
        for l in 0..4 {
            let dx = z.re - c4[l].re;
            let dy = z.im - c4[l].im;
            let r2 = dx * dx + dy * dy;
            acc[l] += b4[l] * tps_kernel_sq(r2);
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (c, &bk) in cc.remainder().iter().zip(bb.remainder()) {
        let dx = z.re - c.re;
        let dy = z.im - c.im;
        let r2 = dx * dx + dy * dy;
        s += bk * tps_kernel_sq(r2);
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalDensity {
    pub centers: Vec<Complex64>,
    pub b: Vec<f64>,
    pub p1: [f64; 3],
    pub lambda: f64,
    pub floor: f64,
}

impl ConformalDensity {
    /// Spline value without the positivity clamp.
    pub fn raw(&self, z: Complex64) -> f64 {
        self.p1[0] + self.p1[1] * z.re + self.p1[2] * z.im + kernel_sum(z, &self.centers, &self.b)
    }

    /// `(Σ b_i, Σ b_i x_i, Σ b_i y_i)`.
    pub fn side_conditions(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, &b) in self.centers.iter().zip(&self.b) {
            out[0] += b;
            out[1] += b * c.re;
            out[2] += b * c.im;
        }
        out
    }

    /// `∫ |∇²Γ|^2` over the plane for the radial part: `16π b^T K b`.
    pub fn bending_energy(&self) -> f64 {
        let k = kernel_matrix(&self.centers, &self.centers);
        let b = DVector::from_column_slice(&self.b);
        16.0 * std::f64::consts::PI * b.dot(&(&k * &b))
    }
}

impl DiskDensity for ConformalDensity {
    fn eval(&self, z: Complex64) -> f64 {
        self.raw(z).max(self.floor)
    }
}

pub fn eval_density(d: &ConformalDensity, z: Complex64) -> f64 {
    d.eval(z)
}

fn kernel_matrix(rows: &[Complex64], cols: &[Complex64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| tps_kernel_sq((rows[i] - cols[j]).norm_sqr()))
}

fn poly_matrix(points: &[Complex64]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => points[i].re,
        _ => points[i].im,
    })
}

fn check_centers(centers: &[Complex64]) -> Result<(), DensityError> {
    if centers.len() < 3 {
        return Err(DensityError::DegenerateCenters);
    }
    let p = poly_matrix(centers);
    let sv = p.singular_values();
    let max = sv.max();
    if !(sv.min() > 1e-12 * max.max(1.0)) {
        return Err(DensityError::DegenerateCenters);
    }
    Ok(())
}

/// Smoothing thin-plate spline: minimizes
/// `λ Σ_r (y_r - Γ(x_r))^2 + (1 - λ) 16π b^T K b` over the span of the
/// kernels at `centers` and affine functions, subject to the side
/// conditions. With `λ = 1` and `data_points == centers` this is exact
/// interpolation.
pub fn fit_density(centers: &[Complex64], data_points: &[Complex64], data_values: &[f64], lambda: f64) -> Result<ConformalDensity, DensityError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(DensityError::InvalidLambda(lambda));
    }
    if data_points.len() != data_values.len() {
        return Err(DensityError::LengthMismatch(data_points.len(), data_values.len()));
    }
    check_centers(centers)?;
    let n = centers.len();
    let interpolating = lambda == 1.0 && data_points == centers;
    let solution = if interpolating {
        // [K P; P^T 0] [b; c] = [y; 0]
        let mut a = DMatrix::zeros(n + 3, n + 3);
        a.view_mut((0, 0), (n, n)).copy_from(&kernel_matrix(centers, centers));
        let p = poly_matrix(centers);
        a.view_mut((0, n), (n, 3)).copy_from(&p);
        a.view_mut((n, 0), (3, n)).copy_from(&p.transpose());
        let mut rhs = DVector::zeros(n + 3);
        rhs.rows_mut(0, n).copy_from_slice(data_values);
        a.lu().solve(&rhs).ok_or(DensityError::Singular)?
    } else {
        // KKT system of the constrained least squares in x = [b; c]:
        // [λ B^T B + γ H, C^T; C, 0] [x; η] = [λ B^T y; 0].
        let m = n + 3;
        let mut basis = DMatrix::zeros(data_points.len(), m);
        basis.view_mut((0, 0), (data_points.len(), n)).copy_from(&kernel_matrix(data_points, centers));
        basis.view_mut((0, n), (data_points.len(), 3)).copy_from(&poly_matrix(data_points));
        let y = DVector::from_column_slice(data_values);
        let gamma = (1.0 - lambda) * 16.0 * std::f64::consts::PI;
        let mut a = DMatrix::zeros(m + 3, m + 3);
        let mut normal = basis.tr_mul(&basis) * lambda;
        let k = kernel_matrix(centers, centers);
        normal.view_mut((0, 0), (n, n)).zip_apply(&k, |x, kij| *x += gamma * kij);
        a.view_mut((0, 0), (m, m)).copy_from(&normal);
        let p = poly_matrix(centers);
        a.view_mut((0, m), (n, 3)).copy_from(&p);
        a.view_mut((m, 0), (3, n)).copy_from(&p.transpose());
        let mut rhs = DVector::zeros(m + 3);
        rhs.rows_mut(0, m).copy_from(&(basis.tr_mul(&y) * lambda));
        a.lu().solve(&rhs).ok_or(DensityError::Singular)?
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(DensityError::Singular);
    }
    let mut density = ConformalDensity {
        centers: centers.to_vec(),
        b: solution.rows(0, n).iter().copied().collect(),
        p1: [solution[n], solution[n + 1], solution[n + 2]],
        lambda,
        floor: 0.0,
    };
    let mean = if data_points.is_empty() {
        0.0
    } else {
        data_points.iter().map(|&z| density.raw(z)).sum::<f64>() / data_points.len() as f64
    };
    density.floor = (FLOOR_RATIO * mean.abs()).max(f64::MIN_POSITIVE);
    Ok(density)
}
