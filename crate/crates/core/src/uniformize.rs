//! Discrete uniformization of a disk-type mesh onto the unit disk.
//!
//! A discrete harmonic `u` (piecewise linear, pinned at two vertices of an
//! excised face) and its conjugate `u*` (continuous only through edge
//! midpoints) give the flattening `Φ = u + i u*` of the mid-edge mesh.
//! The outer boundary lands on a horizontal slit, which the inverse
//! Joukowski map `w = (z - sqrt(z^2 - 4)) / 2` opens onto the unit circle.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use num_complex::Complex64;
use thiserror::Error;

use crate::mesh::{build_midedge, MeshError, MidEdgeMesh, TriMesh, Vec3, DEGENERATE_AREA_RATIO};
use crate::sparse::{conjugate_gradient, CsrMatrix};

/// Required relative residual of the harmonic solve.
pub const HARMONIC_RESIDUAL_TOL: f64 = 1e-10;
/// Largest tolerated disagreement when integrating `u*` around mid-edge cycles.
pub const INTEGRATION_MISMATCH_TOL: f64 = 1e-6;
/// Boundary images must be collinear to this fraction of the slit length.
pub const SLIT_COLLINEARITY_TOL: f64 = 1e-6;
/// Smallest admissible image area of a mid-edge face.
pub const MIN_IMAGE_AREA: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum UniformizeError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("invalid excised face: {0}")]
    InvalidExcisedFace(String),
    #[error("mesh has no face away from the boundary to excise")]
    NoInteriorFace,
    #[error("harmonic system is singular: {0}")]
    Singular(String),
    #[error("harmonic solve did not converge (relative residual {0:e})")]
    NotConverged(f64),
    #[error("conjugate integration mismatch {0:e} exceeds tolerance; input is not discrete harmonic")]
    IntegrationMismatch(f64),
    #[error("boundary images are not collinear (spread {0:e} of slit length)")]
    NotCollinear(f64),
    #[error("inverse Joukowski branch failure at mid-edge vertex {vertex} (|w| = {modulus})")]
    BranchFailure { vertex: usize, modulus: f64 },
    #[error("image of mid-edge face {0} collapsed")]
    CollapsedFace(usize),
}

/// Discrete harmonic function and its conjugate.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    /// Value per parent vertex.
    pub u: Vec<f64>,
    /// Value per mid-edge vertex.
    pub u_star: Vec<f64>,
    pub excised_face: usize,
    /// Vertices of the excised face held at 0 and 1.
    pub pinned: [usize; 2],
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatStage {
    SlitPlane,
    Disk,
}

#[derive(Debug, Clone)]
pub struct FlatMap {
    /// Complex coordinate of every mid-edge vertex.
    pub phi: Vec<Complex64>,
    pub stage: FlatStage,
    /// Real interval covered by the boundary slit before inversion.
    pub slit_interval: (f64, f64),
    /// Imaginary coordinate of the slit line before inversion.
    pub slit_line: f64,
    /// Mid-edge vertices on the outer boundary.
    pub boundary: Vec<usize>,
    pub excised_face: usize,
}

#[derive(Debug, Clone)]
pub struct DiscreteConformalFactors {
    /// Per mid-edge face; the excised face carries 0.
    pub mu_e_face: Vec<f64>,
    pub mu_e_vertex: Vec<f64>,
    pub mu_h_vertex: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct UniformizeOptions {
    /// Face to excise; defaults to the face farthest from the boundary.
    pub excised_face: Option<usize>,
}

/// Everything produced while mapping one mesh to the disk.
#[derive(Debug, Clone)]
pub struct Uniformization {
    pub midedge: MidEdgeMesh,
    pub field: HarmonicField,
    pub slit: FlatMap,
    pub disk: FlatMap,
    pub factors: DiscreteConformalFactors,
}

pub fn uniformize(mesh: &TriMesh, opts: &UniformizeOptions) -> Result<Uniformization, UniformizeError> {
    let midedge = build_midedge(mesh)?;
    let excised = match opts.excised_face {
        Some(f) => f,
        None => default_excised_face(mesh)?,
    };
    let [a, b, _] = *mesh
        .faces()
        .get(excised)
        .ok_or_else(|| UniformizeError::InvalidExcisedFace(format!("face {excised} does not exist")))?;
    let field = solve_harmonic(mesh, excised, [a, b])?;
    let slit = flatten(mesh, &field);
    let disk = slit_to_disk(mesh, &slit)?;
    let factors = conformal_factors(&midedge, &disk)?;
    Ok(Uniformization {
        midedge,
        field,
        slit,
        disk,
        factors,
    })
}

fn cot_weights(p: [&Vec3; 3], area: f64) -> [f64; 3] {
    // cot of the angle at corner k, opposite to edge (k+1, k+2).
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        out[k] = a.dot(&b) / (2.0 * area);
    }
    out
}

fn assemble(mesh: &TriMesh, excised: Option<usize>) -> Result<CsrMatrix, UniformizeError> {
    let total = mesh.total_area();
    let verts = mesh.vertices();
    let mut triplets = Vec::with_capacity(mesh.faces().len() * 9);
    for (f, face) in mesh.faces().iter().enumerate() {
        if Some(f) == excised {
            continue;
        }
        let area = mesh.face_area(f);
        if !(area >= DEGENERATE_AREA_RATIO * total) || area == 0.0 {
            return Err(UniformizeError::DegenerateFace(f));
        }
        let cots = cot_weights([&verts[face[0]], &verts[face[1]], &verts[face[2]]], area);
        for k in 0..3 {
            let (i, j) = (face[(k + 1) % 3], face[(k + 2) % 3]);
            let w = 0.5 * cots[k];
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    Ok(CsrMatrix::from_triplets(verts.len(), triplets))
}

/// Stiffness matrix `A_ij = ∫ <∇φ_i, ∇φ_j>` of piecewise-linear hat
/// functions, so that the Dirichlet energy is `u^T A u`.
pub fn assemble_dirichlet(mesh: &TriMesh) -> Result<CsrMatrix, UniformizeError> {
    assemble(mesh, None)
}

/// Dirichlet energy `u^T A u` of a vertex function.
pub fn dirichlet_energy(mesh: &TriMesh, u: &[f64]) -> Result<f64, UniformizeError> {
    Ok(assemble_dirichlet(mesh)?.quadratic_form(u))
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The face with all vertices off the boundary whose centroid is farthest,
/// along mesh edges, from the boundary. Ties go to the lowest index.
pub fn default_excised_face(mesh: &TriMesh) -> Result<usize, UniformizeError> {
    let verts = mesh.vertices();
    let n = verts.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        let l = mesh.edge_length(e);
        adj[a].push((b, l));
        adj[b].push((a, l));
    }
    let on_boundary = mesh.boundary_vertex_mask();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for v in 0..n {
        if on_boundary[v] {
            dist[v] = 0.0;
            heap.push(HeapItem(0.0, v));
        }
    }
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, l) in &adj[v] {
            if d + l < dist[w] {
                dist[w] = d + l;
                heap.push(HeapItem(d + l, w));
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.iter().any(|&v| on_boundary[v]) {
            continue;
        }
        let c = mesh.face_centroid(f);
        let d = face
            .iter()
            .map(|&v| dist[v] + (c - verts[v]).norm())
            .fold(f64::INFINITY, f64::min);
        if best.map_or(true, |(_, bd)| d > bd) {
            best = Some((f, d));
        }
    }
    best.map(|(f, _)| f).ok_or(UniformizeError::NoInteriorFace)
}

fn check_excised(mesh: &TriMesh, excised: usize, pins: [usize; 2]) -> Result<(), UniformizeError> {
    let face = mesh
        .faces()
        .get(excised)
        .ok_or_else(|| UniformizeError::InvalidExcisedFace(format!("face {excised} does not exist")))?;
    if pins[0] == pins[1] || !face.contains(&pins[0]) || !face.contains(&pins[1]) {
        return Err(UniformizeError::InvalidExcisedFace(format!(
            "pins {pins:?} are not two distinct vertices of face {excised}"
        )));
    }
    let on_boundary = mesh.boundary_vertex_mask();
    if face.iter().any(|&v| on_boundary[v]) {
        return Err(UniformizeError::InvalidExcisedFace(format!(
            "face {excised} touches the boundary"
        )));
    }
    Ok(())
}

/// Solve for the discrete harmonic `u` on the mesh minus `excised`, with
/// `u(pins[0]) = 0` and `u(pins[1]) = 1`, then integrate its conjugate.
pub fn solve_harmonic(mesh: &TriMesh, excised: usize, pins: [usize; 2]) -> Result<HarmonicField, UniformizeError> {
    check_excised(mesh, excised, pins)?;
    let n = mesh.vertices().len();

    // Every vertex must stay connected to the pins once the face is removed.
    let mut vertex_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (f, face) in mesh.faces().iter().enumerate() {
        if f == excised {
            continue;
        }
        for k in 0..3 {
            vertex_adj[face[k]].push(face[(k + 1) % 3]);
            vertex_adj[face[(k + 1) % 3]].push(face[k]);
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = pins.iter().copied().collect();
    for &p in &pins {
        seen[p] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &w in &vertex_adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(UniformizeError::Singular(format!(
            "vertex {v} is disconnected from the pinned vertices"
        )));
    }

    let a = assemble(mesh, Some(excised))?;
    let mut free_index = vec![usize::MAX; n];
    let mut free = Vec::with_capacity(n - 2);
    for v in 0..n {
        if v != pins[0] && v != pins[1] {
            free_index[v] = free.len();
            free.push(v);
        }
    }
    let mut u = vec![0.0; n];
    u[pins[1]] = 1.0;

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    for (fi, &v) in free.iter().enumerate() {
        for (c, val) in a.row(v) {
            if free_index[c] != usize::MAX {
                triplets.push((fi, free_index[c], val));
            } else {
                rhs[fi] -= val * u[c];
            }
        }
    }
    let reduced = CsrMatrix::from_triplets(free.len(), triplets);
    let mut x = vec![0.0; free.len()];
    let max_iter = 20 * free.len().max(50);
    let mut outcome = conjugate_gradient(&reduced, &rhs, &mut x, 1e-14, max_iter);
    for _ in 0..3 {
        if outcome.relative_residual <= 1e-14 {
            break;
        }
        outcome = conjugate_gradient(&reduced, &rhs, &mut x, 1e-14, max_iter);
    }
    if !(outcome.relative_residual <= HARMONIC_RESIDUAL_TOL) {
        return Err(UniformizeError::NotConverged(outcome.relative_residual));
    }
    for (fi, &v) in free.iter().enumerate() {
        u[v] = x[fi];
    }
    let u_star = conjugate_harmonic(mesh, &u, Some(excised))?;
    Ok(HarmonicField {
        u,
        u_star,
        excised_face: excised,
        pinned: pins,
        relative_residual: outcome.relative_residual,
    })
}

/// Stationarity residual `max_k |(A u)_k|` over free vertices, relative to
/// the largest row contribution `max_k Σ_j |A_kj u_j|`.
pub fn stationarity_residual(mesh: &TriMesh, field: &HarmonicField) -> Result<f64, UniformizeError> {
    let a = assemble(mesh, Some(field.excised_face))?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = f64::MIN_POSITIVE;
    for v in 0..mesh.vertices().len() {
        if field.pinned.contains(&v) {
            continue;
        }
        let mut s = 0.0;
        let mut abs = 0.0;
        for (c, val) in a.row(v) {
            s += val * field.u[c];
            abs += (val * field.u[c]).abs();
        }
        worst = worst.max(s.abs());
        scale = scale.max(abs);
    }
    Ok(worst / scale)
}

/// Gradient of the linear interpolant of `u` on face `f`, rotated by +π/2
/// about the oriented face normal.
fn rotated_gradient(mesh: &TriMesh, f: usize, u: &[f64]) -> Vec3 {
    let face = mesh.faces()[f];
    let verts = mesh.vertices();
    let n = mesh.face_normal(f);
    let two_area = 2.0 * mesh.face_area(f);
    let mut g = Vec3::zeros();
    for k in 0..3 {
        let prev = verts[face[(k + 2) % 3]];
        let next = verts[face[(k + 1) % 3]];
        g += n.cross(&(prev - next)) * (u[face[k]] / two_area);
    }
    n.cross(&g)
}

fn midedge_position(mesh: &TriMesh, e: usize) -> Vec3 {
    let [a, b] = mesh.edges()[e];
    (mesh.vertices()[a] + mesh.vertices()[b]) * 0.5
}

/// Integrate the rotated gradient of `u` across mid-edge vertices.
///
/// Faces are visited breadth-first from the lowest-index remaining face,
/// whose first mid-edge vertex is fixed at 0. Mid-edge vertices touched
/// only by the excised face (if any) are left at 0.
pub fn conjugate_harmonic(mesh: &TriMesh, u: &[f64], excised: Option<usize>) -> Result<Vec<f64>, UniformizeError> {
    let n_mid = mesh.edges().len();
    let n_faces = mesh.faces().len();
    let mut value = vec![0.0; n_mid];
    let mut known = vec![false; n_mid];
    let mut visited = vec![false; n_faces];
    let mut mismatch: f64 = 0.0;
    let face_edges = mesh.face_edges();

    for start in 0..n_faces {
        if visited[start] || Some(start) == excised {
            continue;
        }
        let r0 = face_edges[start][0];
        if !known[r0] {
            known[r0] = true;
            value[r0] = 0.0;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            let rot = rotated_gradient(mesh, f, u);
            let mids = face_edges[f];
            let anchor = *mids.iter().find(|&&r| known[r]).expect("face reached through a known vertex");
            let anchor_pos = midedge_position(mesh, anchor);
            for &r in &mids {
                let predicted = value[anchor] + rot.dot(&(midedge_position(mesh, r) - anchor_pos));
                if known[r] {
                    mismatch = mismatch.max((predicted - value[r]).abs());
                } else {
                    value[r] = predicted;
                    known[r] = true;
                }
                for &g in mesh.edge_faces(r) {
                    if !visited[g] && Some(g) != excised {
                        visited[g] = true;
                        queue.push_back(g);
                    }
                }
            }
        }
    }
    if mismatch > INTEGRATION_MISMATCH_TOL {
        return Err(UniformizeError::IntegrationMismatch(mismatch));
    }
    Ok(value)
}

/// Largest per-face disagreement between `u*` differences and the rotated
/// gradient of `u` (zero for an exactly path-independent conjugate).
pub fn conjugate_closure_defect(mesh: &TriMesh, u: &[f64], u_star: &[f64], excised: Option<usize>) -> f64 {
    let mut worst: f64 = 0.0;
    for f in 0..mesh.faces().len() {
        if Some(f) == excised {
            continue;
        }
        let rot = rotated_gradient(mesh, f, u);
        let mids = mesh.face_edges()[f];
        for k in 0..3 {
            let (a, b) = (mids[k], mids[(k + 1) % 3]);
            let expected = rot.dot(&(midedge_position(mesh, b) - midedge_position(mesh, a)));
            worst = worst.max((u_star[b] - u_star[a] - expected).abs());
        }
    }
    worst
}

/// `Φ = u + i u*` on mid-edge vertices, with `u` at a midpoint taken as the
/// mean of its edge's endpoint values.
pub fn flatten(mesh: &TriMesh, field: &HarmonicField) -> FlatMap {
    let phi: Vec<Complex64> = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(r, &[a, b])| Complex64::new(0.5 * (field.u[a] + field.u[b]), field.u_star[r]))
        .collect();
    let boundary: Vec<usize> = (0..mesh.edges().len()).filter(|&e| mesh.is_boundary_edge(e)).collect();
    let (lo, hi) = boundary
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(phi[r].re), hi.max(phi[r].re)));
    let slit_line = median(boundary.iter().map(|&r| phi[r].im).collect());
    FlatMap {
        phi,
        stage: FlatStage::SlitPlane,
        slit_interval: (lo, hi),
        slit_line,
        boundary,
        excised_face: field.excised_face,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Standard deviation of the boundary images' imaginary parts, divided by
/// the slit length.
pub fn slit_flatness(flat: &FlatMap) -> f64 {
    let ims: Vec<f64> = flat.boundary.iter().map(|&r| flat.phi[r].im).collect();
    let mean = ims.iter().sum::<f64>() / ims.len() as f64;
    let var = ims.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ims.len() as f64;
    var.sqrt() / (flat.slit_interval.1 - flat.slit_interval.0)
}

/// Root of `w + 1/w = z` inside the closed unit disk.
pub fn inverse_joukowski(z: Complex64) -> Complex64 {
    let s = (z * z - 4.0).sqrt();
    let w1 = 2.0 / (z + s);
    let w2 = 2.0 / (z - s);
    if w1.norm_sqr() <= w2.norm_sqr() {
        w1
    } else {
        w2
    }
}

/// Point of the unit circle over slit coordinate `x ∈ [-2, 2]`, on the
/// semicircle seen from the given bank of the slit.
pub fn slit_point_to_circle(x: f64, from_above: bool) -> Complex64 {
    let x = x.clamp(-2.0, 2.0);
    let y = (4.0 - x * x).max(0.0).sqrt();
    if from_above {
        Complex64::new(0.5 * x, -0.5 * y)
    } else {
        Complex64::new(0.5 * x, 0.5 * y)
    }
}

/// Normalize the slit onto `[-2, 2]` and apply the inverse Joukowski map.
pub fn slit_to_disk(mesh: &TriMesh, flat: &FlatMap) -> Result<FlatMap, UniformizeError> {
    let (lo, hi) = flat.slit_interval;
    let length = hi - lo;
    if !(length > 0.0) {
        return Err(UniformizeError::NotCollinear(f64::INFINITY));
    }
    let spread = flat
        .boundary
        .iter()
        .map(|&r| (flat.phi[r].im - flat.slit_line).abs())
        .fold(0.0, f64::max)
        / length;
    if spread > SLIT_COLLINEARITY_TOL {
        return Err(UniformizeError::NotCollinear(spread));
    }
    let center = Complex64::new(0.5 * (lo + hi), flat.slit_line);
    let scale = 4.0 / length;
    let z: Vec<Complex64> = flat.phi.iter().map(|p| (p - center) * scale).collect();

    let mut phi = vec![Complex64::new(0.0, 0.0); z.len()];
    let mut on_boundary = vec![false; z.len()];
    for &r in &flat.boundary {
        on_boundary[r] = true;
    }
    for &r in &flat.boundary {
        // The bank is decided by the off-slit corners of the one face at r.
        let f = mesh.edge_faces(r)[0];
        let off: Vec<f64> = mesh.face_edges()[f]
            .iter()
            .filter(|&&s| !on_boundary[s])
            .map(|&s| z[s].im)
            .collect();
        if off.is_empty() {
            return Err(UniformizeError::BranchFailure { vertex: r, modulus: 1.0 });
        }
        let from_above = off.iter().sum::<f64>() > 0.0;
        phi[r] = slit_point_to_circle(z[r].re, from_above);
    }
    for r in 0..z.len() {
        if on_boundary[r] {
            continue;
        }
        let w = inverse_joukowski(z[r]);
        if !(w.norm() < 1.0) {
            return Err(UniformizeError::BranchFailure { vertex: r, modulus: w.norm() });
        }
        phi[r] = w;
    }
    Ok(FlatMap {
        phi,
        stage: FlatStage::Disk,
        slit_interval: flat.slit_interval,
        slit_line: flat.slit_line,
        boundary: flat.boundary.clone(),
        excised_face: flat.excised_face,
    })
}

fn image_area(phi: &[Complex64], face: [usize; 3]) -> f64 {
    let (a, b, c) = (phi[face[0]], phi[face[1]], phi[face[2]]);
    0.5 * ((b - a).conj() * (c - a)).im.abs()
}

/// Euclidean factors per face and vertex, and hyperbolic factors per vertex.
pub fn conformal_factors(midedge: &MidEdgeMesh, disk: &FlatMap) -> Result<DiscreteConformalFactors, UniformizeError> {
    let n_faces = midedge.faces.len();
    let mut mu_e_face = vec![0.0; n_faces];
    for f in 0..n_faces {
        if f == disk.excised_face {
            continue;
        }
        let img = image_area(&disk.phi, midedge.faces[f]);
        if !(img > MIN_IMAGE_AREA) {
            return Err(UniformizeError::CollapsedFace(f));
        }
        mu_e_face[f] = midedge.face_area(f) / img;
    }
    let mut mu_e_vertex = vec![0.0; midedge.vertices.len()];
    let mut mu_h_vertex = vec![0.0; midedge.vertices.len()];
    for r in 0..midedge.vertices.len() {
        let faces: Vec<usize> = midedge.vertex_faces[r]
            .iter()
            .copied()
            .filter(|&f| f != disk.excised_face)
            .collect();
        let mean = faces.iter().map(|&f| mu_e_face[f]).sum::<f64>() / faces.len().max(1) as f64;
        mu_e_vertex[r] = mean;
        mu_h_vertex[r] = mean * (1.0 - disk.phi[r].norm_sqr()).powi(2);
    }
    Ok(DiscreteConformalFactors {
        mu_e_face,
        mu_e_vertex,
        mu_h_vertex,
    })
}

/// Relative deviation of each face's complex edge ratio in the image from
/// the same ratio measured on the 3D mid-edge triangle. Excised face → 0.
pub fn similarity_defects(midedge: &MidEdgeMesh, flat: &FlatMap) -> Vec<f64> {
    (0..midedge.faces.len())
        .map(|f| {
            if f == flat.excised_face {
                return 0.0;
            }
            let [a, b, c] = midedge.faces[f];
            let (pa, pb, pc) = (midedge.vertices[a], midedge.vertices[b], midedge.vertices[c]);
            let e1 = (pb - pa).normalize();
            let normal = (pb - pa).cross(&(pc - pa)).normalize();
            let e2 = normal.cross(&e1);
            let b3 = Complex64::new((pb - pa).norm(), 0.0);
            let c3 = Complex64::new((pc - pa).dot(&e1), (pc - pa).dot(&e2));
            let shape = b3 / c3;
            let image = (flat.phi[b] - flat.phi[a]) / (flat.phi[c] - flat.phi[a]);
            (image - shape).norm() / shape.norm()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_midedge;

    /// Structured grid over [0,1]^2 with a deterministic interior jitter.
    fn jittered_grid(n: usize, lift: impl Fn(f64, f64) -> f64) -> TriMesh {
        let mut verts = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let (mut x, mut y) = (i as f64 / n as f64, j as f64 / n as f64);
                if i > 0 && i < n && j > 0 && j < n {
                    x += 0.15 / n as f64 * ((i * 7 + j * 3) as f64).sin();
                    y += 0.15 / n as f64 * ((i * 5 + j * 11) as f64).cos();
                }
                verts.push(Vec3::new(x, y, lift(x, y)));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh::new(verts, faces).unwrap()
    }

    /// Independent finite-element oracle: explicit hat-function gradients.
    fn oracle_entry(p: [Vec3; 3], i: usize, j: usize) -> f64 {
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let area = 0.5 * n.norm();
        let n = n / n.norm();
        let grad = |k: usize| n.cross(&(p[(k + 2) % 3] - p[(k + 1) % 3])) / (2.0 * area);
        grad(i).dot(&grad(j)) * area
    }

    #[test]
    fn equilateral_diagonal_matches_oracle() {
        let p = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
        ];
        let mesh = TriMesh::new(p.to_vec(), vec![[0, 1, 2]]).unwrap();
        let a = assemble_dirichlet(&mesh).unwrap();
        for k in 0..3 {
            assert!((oracle_entry(p, k, k) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
            assert!((a.get(k, k) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn right_isoceles_hypotenuse_entry_vanishes() {
        let p = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let mesh = TriMesh::new(p.to_vec(), vec![[0, 1, 2]]).unwrap();
        let a = assemble_dirichlet(&mesh).unwrap();
        assert!(oracle_entry(p, 1, 2).abs() < 1e-15);
        assert!(a.get(1, 2).abs() < 1e-15);
    }

    #[test]
    fn assembly_matches_oracle_on_skew_triangles() {
        let tris = [
            [Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.3, 0.4, -0.2), Vec3::new(0.2, 0.9, 0.5)],
            [Vec3::new(0.0, 0.0, 0.0), Vec3::new(3.0, 0.1, 0.0), Vec3::new(2.9, 0.4, 0.2)],
        ];
        for p in tris {
            let mesh = TriMesh::new(p.to_vec(), vec![[0, 1, 2]]).unwrap();
            let a = assemble_dirichlet(&mesh).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a.get(i, j) - oracle_entry(p, i, j)).abs() < 1e-12, "{i}{j}");
                }
            }
        }
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let mesh = jittered_grid(6, |x, y| 0.3 * x * y);
        let a = assemble_dirichlet(&mesh).unwrap();
        for r in 0..a.dim() {
            let s: f64 = a.row(r).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12);
            for (c, v) in a.row(r) {
                assert!((a.get(c, r) - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_face_rejected() {
        let mesh = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(assemble_dirichlet(&mesh), Err(UniformizeError::DegenerateFace(0))));
    }

    #[test]
    fn linear_function_is_discrete_harmonic_on_flat_mesh() {
        let mesh = jittered_grid(8, |_, _| 0.0);
        let a = assemble_dirichlet(&mesh).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| 0.7 * p.x - 1.3 * p.y + 0.2).collect();
        let boundary = mesh.boundary_vertex_mask();
        for v in 0..u.len() {
            if boundary[v] {
                continue;
            }
            let s: f64 = a.row(v).map(|(c, val)| val * u[c]).sum();
            assert!(s.abs() <= 1e-10, "vertex {v}: {s}");
        }
    }

    #[test]
    fn pins_exact_and_solution_deterministic() {
        let mesh = jittered_grid(8, |x, y| 0.2 * (3.0 * x).sin() * y);
        let f = default_excised_face(&mesh).unwrap();
        let face = mesh.faces()[f];
        let a = solve_harmonic(&mesh, f, [face[0], face[1]]).unwrap();
        let b = solve_harmonic(&mesh, f, [face[0], face[1]]).unwrap();
        assert_eq!(a.u[face[0]], 0.0);
        assert_eq!(a.u[face[1]], 1.0);
        assert_eq!(a.u, b.u);
        assert_eq!(a.u_star, b.u_star);
        assert!(stationarity_residual(&mesh, &a).unwrap() <= 1e-10);
        assert!(conjugate_closure_defect(&mesh, &a.u, &a.u_star, Some(f)) <= 1e-9);
    }

    #[test]
    fn excised_face_on_boundary_rejected() {
        let mesh = jittered_grid(4, |_, _| 0.0);
        let face = mesh.faces()[0];
        assert!(matches!(
            solve_harmonic(&mesh, 0, [face[0], face[1]]),
            Err(UniformizeError::InvalidExcisedFace(_))
        ));
    }

    #[test]
    fn conjugate_of_constant_is_zero() {
        let mesh = jittered_grid(5, |x, _| 0.1 * x * x);
        let u = vec![2.5; mesh.vertices().len()];
        let us = conjugate_harmonic(&mesh, &u, None).unwrap();
        assert!(us.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn conjugate_of_x_is_y() {
        let mesh = jittered_grid(5, |_, _| 0.0);
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p.x).collect();
        let us = conjugate_harmonic(&mesh, &u, None).unwrap();
        let me = build_midedge(&mesh).unwrap();
        let offset = us[0] - me.vertices[0].y;
        for (r, p) in me.vertices.iter().enumerate() {
            assert!((us[r] - (p.y + offset)).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugate_rejects_non_harmonic_input() {
        let mesh = jittered_grid(5, |_, _| 0.0);
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p.x * p.x * 40.0).collect();
        assert!(matches!(
            conjugate_harmonic(&mesh, &u, None),
            Err(UniformizeError::IntegrationMismatch(_))
        ));
    }

    #[test]
    fn joukowski_examples() {
        let w = inverse_joukowski(Complex64::new(3.0, 0.0));
        assert!((w - Complex64::new((3.0 - 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-15);
        assert!((slit_point_to_circle(-2.0, true) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((slit_point_to_circle(2.0, false) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // Just above / below the middle of the slit.
        let above = inverse_joukowski(Complex64::new(0.0, 1e-9));
        let below = inverse_joukowski(Complex64::new(0.0, -1e-9));
        assert!((above - Complex64::new(0.0, -1.0)).norm() < 1e-8);
        assert!((below - Complex64::new(0.0, 1.0)).norm() < 1e-8);
        assert_eq!(slit_point_to_circle(0.0, true), Complex64::new(0.0, -1.0));
        assert_eq!(slit_point_to_circle(0.0, false), Complex64::new(0.0, 1.0));
        // Far field: w ≈ 1/z without cancellation.
        let far = inverse_joukowski(Complex64::new(1e8, 3e7));
        let z = far + 1.0 / far;
        assert!((z - Complex64::new(1e8, 3e7)).norm() / 1e8 < 1e-14);
    }

    #[test]
    fn flattening_properties_on_curved_grid() {
        let mesh = jittered_grid(10, |x, y| 0.3 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) * 8.0).exp());
        let uni = uniformize(&mesh, &UniformizeOptions::default()).unwrap();
        assert!(slit_flatness(&uni.slit) <= 1e-8);
        let defects = similarity_defects(&uni.midedge, &uni.slit);
        assert!(defects.iter().all(|&d| d <= 1e-9), "{:?}", defects.iter().cloned().fold(0.0, f64::max));
        for (r, w) in uni.disk.phi.iter().enumerate() {
            if uni.midedge.on_boundary[r] {
                assert!((w.norm() - 1.0).abs() < 1e-6);
            } else {
                assert!(w.norm() < 1.0);
            }
        }
        // Translation leaves the map unchanged.
        let moved = mesh.map_vertices(|p| p + Vec3::new(3.0, -2.0, 1.0));
        let uni2 = uniformize(&moved, &UniformizeOptions::default()).unwrap();
        let worst = uni.disk.phi.iter().zip(&uni2.disk.phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        // Rounding differences are amplified by the square root at the slit ends.
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn conjugate_has_equal_dirichlet_energy() {
        let mesh = jittered_grid(10, |x, y| 0.2 * x * y);
        let uni = uniformize(&mesh, &UniformizeOptions::default()).unwrap();
        let f = uni.field.excised_face;
        let a = assemble(&mesh, Some(f)).unwrap();
        let e_u = a.quadratic_form(&uni.field.u);
        // Non-conforming energy of u*: per face, the gradient of the linear
        // interpolant through the three mid-edge values.
        let me = &uni.midedge;
        let mut e_star = 0.0;
        for (g, face) in me.faces.iter().enumerate() {
            if g == f {
                continue;
            }
            let p = [me.vertices[face[0]], me.vertices[face[1]], me.vertices[face[2]]];
            let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let area = 0.5 * n.norm();
            let n = n / n.norm();
            let mut grad = Vec3::zeros();
            for k in 0..3 {
                grad += n.cross(&(p[(k + 2) % 3] - p[(k + 1) % 3])) * (uni.field.u_star[face[k]] / (2.0 * area));
            }
            e_star += grad.norm_squared() * mesh.face_area(g);
        }
        assert!((e_u - e_star).abs() <= 1e-8 * e_u, "{e_u} vs {e_star}");
    }

    #[test]
    fn conformal_factor_identities() {
        let mesh = jittered_grid(10, |x, y| 0.25 * (2.0 * x).sin() * y);
        let uni = uniformize(&mesh, &UniformizeOptions::default()).unwrap();
        let me = &uni.midedge;
        let f = uni.disk.excised_face;
        let mut total = 0.0;
        let mut mid_area = 0.0;
        for g in 0..me.faces.len() {
            if g == f {
                continue;
            }
            total += uni.factors.mu_e_face[g] * image_area(&uni.disk.phi, me.faces[g]);
            mid_area += me.face_area(g);
            assert!(uni.factors.mu_e_face[g] > 0.0);
        }
        assert!((total - mid_area).abs() <= 1e-12 * mid_area);
        for r in 0..me.vertices.len() {
            let expected = uni.factors.mu_e_vertex[r] * (1.0 - uni.disk.phi[r].norm_sqr()).powi(2);
            assert_eq!(uni.factors.mu_h_vertex[r], expected);
        }
    }

    #[test]
    fn identity_flattening_has_unit_factors() {
        let mesh = jittered_grid(4, |_, _| 0.0).map_vertices(|p| p * 0.5);
        let me = build_midedge(&mesh).unwrap();
        let flat = FlatMap {
            phi: me.vertices.iter().map(|p| Complex64::new(p.x, p.y)).collect(),
            stage: FlatStage::Disk,
            slit_interval: (0.0, 0.0),
            slit_line: 0.0,
            boundary: Vec::new(),
            excised_face: usize::MAX,
        };
        let factors = conformal_factors(&me, &flat).unwrap();
        assert!(factors.mu_e_face.iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(factors.mu_e_vertex.iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hyperbolic_factor_formula() {
        // |Φ| = 0.5 and μ^E = 2 give μ^H = 2 · 0.75^2.
        let phi = Complex64::new(0.3, 0.4);
        assert!((2.0 * (1.0 - phi.norm_sqr()).powi(2) - 1.125).abs() < 1e-15);
    }
}
