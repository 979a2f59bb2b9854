//! Synthetic disk-type test surfaces.
//!
//! All surfaces are built on one polar triangulation of the unit disk with
//! `m = resolution / 2` rings: ring `k = 1..=m` at radius `k/m` carries `6k`
//! vertices, consecutive rings are stitched by angle, and all triangles are
//! close to equilateral.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriMesh, Vec3};

pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("resolution must be at least {MIN_RESOLUTION}, got {0}")]
    ResolutionTooLow(usize),
    #[error("unknown surface kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceKind {
    FlatDisk,
    /// `z = h exp(-r^2 / (2 σ^2))`.
    GaussianBump { height: f64, width: f64 },
    /// Two Gaussian bumps centered at `(±0.4, 0)`.
    TwoBumps { height: f64, width: f64 },
    /// The flat disk rolled around a cylinder axis parallel to `y`; the
    /// diameter along `x` turns through `angle_deg`. Isometric to the flat disk.
    BentSheet { angle_deg: f64 },
}

impl SurfaceKind {
    /// Build from a kebab-case name and optional parameters.
    pub fn from_name(name: &str, height: Option<f64>, width: Option<f64>, angle_deg: Option<f64>) -> Result<Self, SynthError> {
        Ok(match name {
            "flat-disk" => SurfaceKind::FlatDisk,
            "gaussian-bump" => SurfaceKind::GaussianBump {
                height: height.unwrap_or(0.4),
                width: width.unwrap_or(0.3),
            },
            "two-bumps" => SurfaceKind::TwoBumps {
                height: height.unwrap_or(0.3),
                width: width.unwrap_or(0.2),
            },
            "bent-sheet" => SurfaceKind::BentSheet {
                angle_deg: angle_deg.unwrap_or(30.0),
            },
            other => return Err(SynthError::UnknownKind(other.to_string())),
        })
    }

    fn place(&self, x: f64, y: f64) -> Vec3 {
        let gauss = |cx: f64, h: f64, w: f64| h * (-((x - cx).powi(2) + y * y) / (2.0 * w * w)).exp();
        match *self {
            SurfaceKind::FlatDisk => Vec3::new(x, y, 0.0),
            SurfaceKind::GaussianBump { height, width } => Vec3::new(x, y, gauss(0.0, height, width)),
            SurfaceKind::TwoBumps { height, width } => Vec3::new(x, y, gauss(-0.4, height, width) + gauss(0.4, height, width)),
            SurfaceKind::BentSheet { angle_deg } => {
                if angle_deg == 0.0 {
                    return Vec3::new(x, y, 0.0);
                }
                // Unit half-width bends through the angle: rho = 2 / angle.
                let rho = 2.0 / angle_deg.to_radians();
                Vec3::new(rho * (x / rho).sin(), y, rho * (1.0 - (x / rho).cos()))
            }
        }
    }
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceKind::FlatDisk => write!(f, "flat-disk"),
            SurfaceKind::GaussianBump { height, width } => write!(f, "gaussian-bump(h={height},w={width})"),
            SurfaceKind::TwoBumps { height, width } => write!(f, "two-bumps(h={height},w={width})"),
            SurfaceKind::BentSheet { angle_deg } => write!(f, "bent-sheet({angle_deg}deg)"),
        }
    }
}

fn ring_size(k: usize) -> usize {
    6 * k
}

fn ring_count(resolution: usize) -> usize {
    resolution / 2
}

/// Planar polar triangulation of the unit disk.
pub fn disk_triangulation(resolution: usize) -> Result<(Vec<[f64; 2]>, Vec<[usize; 3]>), SynthError> {
    if resolution < MIN_RESOLUTION {
        return Err(SynthError::ResolutionTooLow(resolution));
    }
    let rings = ring_count(resolution);
    let mut points = vec![[0.0, 0.0]];
    let mut starts = vec![0usize];
    let angle = |k: usize, s: usize| TAU * s as f64 / ring_size(k) as f64;
    for k in 1..=rings {
        starts.push(points.len());
        let r = k as f64 / rings as f64;
        for s in 0..ring_size(k) {
            let t = angle(k, s);
            points.push([r * t.cos(), r * t.sin()]);
        }
    }
    let mut faces = Vec::new();
    let n1 = ring_size(1);
    for s in 0..n1 {
        faces.push([0, starts[1] + s, starts[1] + (s + 1) % n1]);
    }
    for k in 2..=rings {
        let (p, q) = (ring_size(k - 1), ring_size(k));
        let (a0, b0) = (starts[k - 1], starts[k]);
        let (mut i, mut j) = (0, 0);
        // Walk both rings once around, always advancing the ring whose next
        // vertex comes first in angle.
        while i < p || j < q {
            let advance_inner = j == q || (i < p && angle(k - 1, i + 1) <= angle(k, j + 1));
            if advance_inner {
                faces.push([a0 + i % p, b0 + j % q, a0 + (i + 1) % p]);
                i += 1;
            } else {
                faces.push([a0 + i % p, b0 + j % q, b0 + (j + 1) % q]);
                j += 1;
            }
        }
    }
    Ok((points, faces))
}

pub fn synth_surface(kind: SurfaceKind, resolution: usize) -> Result<TriMesh, SynthError> {
    let (points, faces) = disk_triangulation(resolution)?;
    let vertices = points.iter().map(|&[x, y]| kind.place(x, y)).collect();
    Ok(TriMesh::new(vertices, faces).expect("polar triangulation indices are valid"))
}
