//! Disk Möbius transformations and hyperbolic-disk quantities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MobiusError {
    #[error("Möbius center must lie in the open unit disk (|a| = {0})")]
    CenterOutsideDisk(f64),
    #[error("Möbius rotation must be unimodular (|tau| = {0})")]
    NotUnimodular(f64),
}

/// `m(z) = tau (z - a) / (1 - conj(a) z)` with `|a| < 1`, `|tau| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "MobiusRecord", try_from = "MobiusRecord")]
pub struct DiskMobius {
    a: Complex64,
    tau: Complex64,
}

/// Flat serialized form.
#[derive(Serialize, Deserialize)]
struct MobiusRecord {
    a_re: f64,
    a_im: f64,
    tau_re: f64,
    tau_im: f64,
}

impl From<DiskMobius> for MobiusRecord {
    fn from(m: DiskMobius) -> Self {
        MobiusRecord {
            a_re: m.a.re,
            a_im: m.a.im,
            tau_re: m.tau.re,
            tau_im: m.tau.im,
        }
    }
}

impl TryFrom<MobiusRecord> for DiskMobius {
    type Error = MobiusError;
    fn try_from(r: MobiusRecord) -> Result<Self, MobiusError> {
        DiskMobius::new(Complex64::new(r.a_re, r.a_im), Complex64::new(r.tau_re, r.tau_im))
    }
}

impl DiskMobius {
    pub fn new(a: Complex64, tau: Complex64) -> Result<Self, MobiusError> {
        if !(a.norm() < 1.0) {
            return Err(MobiusError::CenterOutsideDisk(a.norm()));
        }
        if !((tau.norm() - 1.0).abs() <= 1e-12) {
            return Err(MobiusError::NotUnimodular(tau.norm()));
        }
        Ok(DiskMobius { a, tau })
    }

    pub fn identity() -> Self {
        DiskMobius {
            a: Complex64::new(0.0, 0.0),
            tau: Complex64::new(1.0, 0.0),
        }
    }

    /// Rotation `z -> e^{i theta} z`.
    pub fn rotation(theta: f64) -> Self {
        DiskMobius {
            a: Complex64::new(0.0, 0.0),
            tau: Complex64::from_polar(1.0, theta),
        }
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        self.tau * (z - self.a) / (1.0 - self.a.conj() * z)
    }

    /// `m'(z) = tau (1 - |a|^2) / (1 - conj(a) z)^2`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let d = 1.0 - self.a.conj() * z;
        self.tau * (1.0 - self.a.norm_sqr()) / (d * d)
    }

    /// Matrix `[[tau, -tau a], [-conj(a), 1]]` acting by linear fractions.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [
            [self.tau, -self.tau * self.a],
            [-self.a.conj(), Complex64::new(1.0, 0.0)],
        ]
    }

    fn from_matrix(m: [[Complex64; 2]; 2]) -> Self {
        let [[p, q], [_, s]] = m;
        let tau = p / s;
        let a = -q / p;
        DiskMobius {
            a,
            tau: tau / tau.norm(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &DiskMobius) -> DiskMobius {
        let x = self.matrix();
        let y = other.matrix();
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
            }
        }
        DiskMobius::from_matrix(out)
    }

    pub fn inverse(&self) -> DiskMobius {
        DiskMobius {
            a: -self.a * self.tau,
            tau: self.tau.conj(),
        }
    }

    /// The member of the one-parameter family of disk automorphisms sending
    /// `z0` to `w0`, selected by the unimodular parameter `sigma`.
    pub fn family(z0: Complex64, w0: Complex64, sigma: Complex64) -> DiskMobius {
        let sb = sigma.conj();
        let a = (z0 - w0 * sb) / (1.0 - z0.conj() * w0 * sb);
        let tau = sigma * (1.0 - z0.conj() * w0 * sb) / (1.0 - z0 * w0.conj() * sigma);
        DiskMobius {
            a,
            tau: tau / tau.norm(),
        }
    }

    /// Fixed automorphism `u -> (u + z) / (1 + conj(z) u)` carrying 0 to `z`.
    pub fn base(z: Complex64) -> DiskMobius {
        DiskMobius {
            a: -z,
            tau: Complex64::new(1.0, 0.0),
        }
    }
}

pub fn mobius_apply(m: &DiskMobius, z: Complex64) -> Complex64 {
    m.apply(z)
}

pub fn mobius_compose(m1: &DiskMobius, m2: &DiskMobius) -> DiskMobius {
    m1.compose(m2)
}

pub fn mobius_inverse(m: &DiskMobius) -> DiskMobius {
    m.inverse()
}

pub fn mobius_family(z0: Complex64, w0: Complex64, sigma: Complex64) -> DiskMobius {
    DiskMobius::family(z0, w0, sigma)
}

pub fn base_mobius(z: Complex64) -> DiskMobius {
    DiskMobius::base(z)
}

/// Pseudo-distance `|(z - w) / (1 - conj(w) z)|`, monotone in the
/// hyperbolic distance.
#[inline]
pub fn pseudo_distance(z: Complex64, w: Complex64) -> f64 {
    ((z - w) / (1.0 - w.conj() * z)).norm()
}

/// Distance for the metric `(1 - |z|^2)^{-2} |dz|^2`.
pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> f64 {
    pseudo_distance(z, w).min(1.0).atanh()
}

/// Euclidean radius of the hyperbolic disk of radius `r` centred at 0.
pub fn euclidean_radius(r: f64) -> f64 {
    r.tanh()
}

/// Hyperbolic area of a disk of hyperbolic radius `r`.
pub fn hyperbolic_disk_area(r: f64) -> f64 {
    std::f64::consts::PI * r.sinh().powi(2)
}
