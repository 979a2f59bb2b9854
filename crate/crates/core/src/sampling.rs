//! Farthest-point sampling on the mid-edge graph, geodesic Voronoi masses
//! and fill distance.
//!
//! Geodesics are shortest paths on the graph whose nodes are mid-edge
//! vertices and whose arcs join the three mid-edges of every face, with
//! Euclidean lengths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MidEdgeMesh, TriMesh};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("requested {requested} samples but only {available} admissible vertices exist")]
    TooManySamples { requested: usize, available: usize },
    #[error("at least one sample is required")]
    NoSamples,
    #[error("sample vertex {0} does not exist")]
    InvalidSample(usize),
}

/// Undirected weighted graph in adjacency-list form.
#[derive(Debug, Clone)]
pub struct SurfaceGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SurfaceGraph {
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> SurfaceGraph {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b, w) in edges {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        SurfaceGraph { adjacency }
    }

    /// Arcs between the mid-edges of each face. Interior mid-edges are
    /// shared by two faces, so each arc appears once per face holding it.
    pub fn from_midedge(me: &MidEdgeMesh) -> SurfaceGraph {
        let mut edges = Vec::with_capacity(3 * me.faces.len());
        for face in &me.faces {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                edges.push((a, b, (me.vertices[a] - me.vertices[b]).norm()));
            }
        }
        SurfaceGraph::from_edges(me.vertices.len(), &edges)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    label: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so BinaryHeap pops the smallest (dist, label, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.label.cmp(&self.label))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source shortest paths. `label[v]` is the position in `sources` of
/// the nearest source; equal distances go to the lower position.
pub fn multi_source_dijkstra(graph: &SurfaceGraph, sources: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut label = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for (k, &s) in sources.iter().enumerate() {
        if label[s] == usize::MAX {
            dist[s] = 0.0;
            label[s] = k;
            heap.push(Entry { dist: 0.0, label: k, node: s });
        }
    }
    while let Some(Entry { dist: d, label: l, node: v }) = heap.pop() {
        if d > dist[v] || (d == dist[v] && l != label[v]) {
            continue;
        }
        for &(u, w) in graph.neighbors(v) {
            let nd = d + w;
            if nd < dist[u] || (nd == dist[u] && l < label[u]) {
                dist[u] = nd;
                label[u] = l;
                heap.push(Entry { dist: nd, label: l, node: u });
            }
        }
    }
    (dist, label)
}

pub fn dijkstra(graph: &SurfaceGraph, source: usize) -> Vec<f64> {
    multi_source_dijkstra(graph, &[source]).0
}

/// Lower `min_dist` to the distance from `source` wherever that is smaller,
/// expanding only through improved nodes.
fn relax_from(graph: &SurfaceGraph, source: usize, min_dist: &mut [f64]) {
    let mut heap = BinaryHeap::new();
    min_dist[source] = 0.0;
    heap.push(Entry { dist: 0.0, label: 0, node: source });
    while let Some(Entry { dist: d, node: v, .. }) = heap.pop() {
        if d > min_dist[v] {
            continue;
        }
        for &(u, w) in graph.neighbors(v) {
            let nd = d + w;
            if nd < min_dist[u] {
                min_dist[u] = nd;
                heap.push(Entry { dist: nd, label: 0, node: u });
            }
        }
    }
}

/// Farthest-point sampling among nodes with `admissible[v]`. The start node
/// only seeds the first distance field and is not itself selected unless it
/// is farthest from itself (a single-node graph). Ties go to the lowest node.
pub fn fps_on_graph(graph: &SurfaceGraph, count: usize, start: usize, admissible: &[bool]) -> Result<Vec<usize>, SamplingError> {
    let available = admissible.iter().filter(|&&a| a).count();
    if count > available {
        return Err(SamplingError::TooManySamples { requested: count, available });
    }
    let pick = |d: &[f64], taken: &[bool]| -> usize {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for v in 0..d.len() {
            if admissible[v] && !taken[v] && d[v] > best.1 {
                best = (v, d[v]);
            }
        }
        best.0
    };
    let mut taken = vec![false; graph.node_count()];
    let mut samples = Vec::with_capacity(count);
    if count == 0 {
        return Ok(samples);
    }
    let first = pick(&dijkstra(graph, start), &taken);
    samples.push(first);
    taken[first] = true;
    let mut min_dist = vec![f64::INFINITY; graph.node_count()];
    relax_from(graph, first, &mut min_dist);
    while samples.len() < count {
        let next = pick(&min_dist, &taken);
        samples.push(next);
        taken[next] = true;
        relax_from(graph, next, &mut min_dist);
    }
    Ok(samples)
}

/// Largest graph distance from any node to its nearest sample.
pub fn fill_distance_on_graph(graph: &SurfaceGraph, samples: &[usize]) -> f64 {
    let (dist, _) = multi_source_dijkstra(graph, samples);
    dist.iter().copied().fold(0.0, f64::max)
}

/// Nearest sample of every face and the face-to-sample distance. A face
/// centroid reaches a sample through whichever of its mid-edges is best.
pub fn voronoi_assignment(mesh: &TriMesh, me: &MidEdgeMesh, graph: &SurfaceGraph, samples: &[usize]) -> Vec<usize> {
    let (dist, label) = multi_source_dijkstra(graph, samples);
    (0..me.faces.len())
        .map(|f| {
            let c = mesh.face_centroid(f);
            let mut best = (f64::INFINITY, usize::MAX);
            for &r in &me.faces[f] {
                let d = dist[r] + (c - me.vertices[r]).norm();
                if d < best.0 || (d == best.0 && label[r] < best.1) {
                    best = (d, label[r]);
                }
            }
            best.1
        })
        .collect()
}

fn masses_from_assignment(mesh: &TriMesh, assignment: &[usize], count: usize) -> Vec<f64> {
    let mut masses = vec![0.0; count];
    for (f, &k) in assignment.iter().enumerate() {
        masses[k] += mesh.face_area(f);
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    masses
}

/// Samples, their disk images and Voronoi masses; the transport marginal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    /// Mid-edge vertex indices.
    pub indices: Vec<usize>,
    pub disk: Vec<Complex64>,
    pub masses: Vec<f64>,
    /// In the units of the mesh.
    pub fill_distance: f64,
    pub equal_mass: bool,
    /// `max_i |ξ_i - 1/N|`.
    pub max_mass_deviation: f64,
}

impl DiscreteMeasure {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Whether the masses are within `0.5 / N` of uniform.
    pub fn meets_equal_mass_bound(&self) -> bool {
        self.max_mass_deviation <= 0.5 / self.len() as f64
    }
}

fn max_deviation(masses: &[f64]) -> f64 {
    let target = 1.0 / masses.len() as f64;
    masses.iter().map(|m| (m - target).abs()).fold(0.0, f64::max)
}

/// Mid-edge vertices strictly inside the surface; only these map into the
/// open disk.
pub fn interior_mask(me: &MidEdgeMesh) -> Vec<bool> {
    me.on_boundary.iter().map(|b| !b).collect()
}

/// FPS over interior mid-edge vertices from a seeded random start.
pub fn fps_sample(me: &MidEdgeMesh, count: usize, seed: u64) -> Result<Vec<usize>, SamplingError> {
    let graph = SurfaceGraph::from_midedge(me);
    let admissible = interior_mask(me);
    let candidates: Vec<usize> = (0..admissible.len()).filter(|&v| admissible[v]).collect();
    if candidates.is_empty() {
        return Err(SamplingError::TooManySamples { requested: count, available: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = candidates[rng.gen_range(0..candidates.len())];
    fps_on_graph(&graph, count, start, &admissible)
}

/// Voronoi masses, disk images and fill distance for the given samples.
pub fn voronoi_masses(mesh: &TriMesh, me: &MidEdgeMesh, phi: &[Complex64], samples: &[usize]) -> Result<DiscreteMeasure, SamplingError> {
    if samples.is_empty() {
        return Err(SamplingError::NoSamples);
    }
    if let Some(&bad) = samples.iter().find(|&&s| s >= me.vertices.len()) {
        return Err(SamplingError::InvalidSample(bad));
    }
    let graph = SurfaceGraph::from_midedge(me);
    let assignment = voronoi_assignment(mesh, me, &graph, samples);
    let masses = masses_from_assignment(mesh, &assignment, samples.len());
    Ok(DiscreteMeasure {
        indices: samples.to_vec(),
        disk: samples.iter().map(|&s| phi[s]).collect(),
        max_mass_deviation: max_deviation(&masses),
        masses,
        fill_distance: fill_distance_on_graph(&graph, samples),
        equal_mass: false,
    })
}

pub fn fill_distance(me: &MidEdgeMesh, samples: &[usize]) -> f64 {
    fill_distance_on_graph(&SurfaceGraph::from_midedge(me), samples)
}

/// Moves tried per cell when equalizing masses.
const EQUALIZE_NEIGHBORS: usize = 12;
/// Cells examined, from the worst, before giving up on an iteration.
const EQUALIZE_CELLS: usize = 6;

/// `(max deviation, sum of squared deviations)`, compared lexicographically.
fn mass_objective(masses: &[f64]) -> (f64, f64) {
    let target = 1.0 / masses.len() as f64;
    (max_deviation(masses), masses.iter().map(|m| (m - target).powi(2)).sum())
}

fn nearest_admissible(graph: &SurfaceGraph, from: usize, admissible: &[bool], taken: &[bool], k: usize) -> Vec<usize> {
    let dist = dijkstra(graph, from);
    let mut order: Vec<usize> = (0..dist.len())
        .filter(|&v| admissible[v] && !taken[v] && dist[v].is_finite())
        .collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// FPS followed by a local search that relocates samples of the most
/// unequal Voronoi cells to nearby free vertices while this lowers
/// `(max_i |ξ_i - 1/N|, Σ_i (ξ_i - 1/N)^2)`. Stops once every cell is within
/// `target_deviation` of `1/N` or no move helps.
pub fn equal_mass_sample(
    mesh: &TriMesh,
    me: &MidEdgeMesh,
    phi: &[Complex64],
    count: usize,
    seed: u64,
    target_deviation: f64,
) -> Result<DiscreteMeasure, SamplingError> {
    let mut samples = fps_sample(me, count, seed)?;
    let graph = SurfaceGraph::from_midedge(me);
    let admissible = interior_mask(me);
    let evaluate = |s: &[usize]| masses_from_assignment(mesh, &voronoi_assignment(mesh, me, &graph, s), s.len());
    let mut masses = evaluate(&samples);
    let mut objective = mass_objective(&masses);
    let max_iterations = 50 * count;
    for _ in 0..max_iterations {
        if objective.0 <= target_deviation {
            break;
        }
        let target = 1.0 / count as f64;
        let mut cells: Vec<usize> = (0..count).collect();
        cells.sort_by(|&a, &b| (masses[b] - target).abs().total_cmp(&(masses[a] - target).abs()).then(a.cmp(&b)));
        let mut taken = vec![false; me.vertices.len()];
        samples.iter().for_each(|&s| taken[s] = true);
        let mut improved = false;
        'cells: for &cell in cells.iter().take(EQUALIZE_CELLS) {
            let mut best: Option<(usize, Vec<f64>, (f64, f64))> = None;
            for v in nearest_admissible(&graph, samples[cell], &admissible, &taken, EQUALIZE_NEIGHBORS) {
                let mut trial = samples.clone();
                trial[cell] = v;
                let m = evaluate(&trial);
                let o = mass_objective(&m);
                let better_than_best = best.as_ref().map_or(true, |b| o < b.2);
                if o < objective && better_than_best {
                    best = Some((v, m, o));
                }
            }
            if let Some((v, m, o)) = best {
                samples[cell] = v;
                masses = m;
                objective = o;
                improved = true;
                break 'cells;
            }
        }
        if !improved {
            break;
        }
    }
    let mut measure = voronoi_masses(mesh, me, phi, &samples)?;
    measure.equal_mass = true;
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_midedge, Vec3};

    fn path() -> SurfaceGraph {
        SurfaceGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)])
    }

    /// Square `[-1,1]^2` grid, mirror symmetric about x = 0.
    fn grid(n: usize) -> TriMesh {
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Vec3::new(-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut f = Vec::new();
        for j in 0..n {
            for i in 0..n {
                // Diagonals mirrored across the middle column.
                if (i < n / 2) == (j % 2 == 0) {
                    f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                } else {
                    f.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                    f.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
        }
        TriMesh::new(v, f).unwrap()
    }

    fn fake_phi(me: &MidEdgeMesh) -> Vec<Complex64> {
        me.vertices.iter().map(|p| Complex64::new(p.x, p.y) * 0.5).collect()
    }

    #[test]
    fn path_graph_fps_order() {
        let g = path();
        assert_eq!(fps_on_graph(&g, 3, 0, &[true; 3]).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn exhaustive_fps_selects_everything() {
        let mesh = grid(6);
        let me = build_midedge(&mesh).unwrap();
        let interior = interior_mask(&me).iter().filter(|&&b| b).count();
        let a = fps_sample(&me, interior, 4).unwrap();
        let b = fps_sample(&me, interior, 4).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), interior);
        assert!(fps_sample(&me, interior + 1, 4).is_err());
    }

    #[test]
    fn path_graph_fill_distance() {
        let g = path();
        assert_eq!(fill_distance_on_graph(&g, &[0]), 2.0);
        assert_eq!(fill_distance_on_graph(&g, &[0, 1, 2]), 0.0);
    }

    #[test]
    fn fill_distance_non_increasing_along_fps() {
        let mesh = grid(8);
        let me = build_midedge(&mesh).unwrap();
        let s = fps_sample(&me, 30, 9).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..=s.len() {
            let h = fill_distance(&me, &s[..n]);
            assert!(h <= last + 1e-15);
            last = h;
        }
    }

    #[test]
    fn ties_go_to_lower_source_position() {
        let g = path();
        let (d, l) = multi_source_dijkstra(&g, &[2, 0]);
        assert_eq!(d, vec![0.0, 1.0, 0.0]);
        assert_eq!(l, vec![1, 0, 0]);
    }

    #[test]
    fn single_sample_takes_all_mass() {
        let mesh = grid(4);
        let me = build_midedge(&mesh).unwrap();
        let phi = fake_phi(&me);
        let m = voronoi_masses(&mesh, &me, &phi, &[5]).unwrap();
        assert!((m.masses[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.disk[0], phi[5]);
    }

    #[test]
    fn mirror_symmetric_split_is_even() {
        let n = 8;
        let mesh = grid(n);
        let me = build_midedge(&mesh).unwrap();
        let phi = fake_phi(&me);
        let find = |x: f64, y: f64| {
            me.vertices
                .iter()
                .position(|p| (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12)
                .unwrap()
        };
        let h = 1.0 / n as f64;
        let m = voronoi_masses(&mesh, &me, &phi, &[find(-0.5, h), find(0.5, h)]).unwrap();
        let face_area = 0.5 * (2.0 / n as f64).powi(2) / mesh.total_area();
        assert!((m.masses[0] - 0.5).abs() <= face_area, "{:?}", m.masses);
        assert!((m.masses[1] - 0.5).abs() <= face_area);
    }

    #[test]
    fn masses_sum_to_one() {
        let mesh = grid(8);
        let me = build_midedge(&mesh).unwrap();
        let phi = fake_phi(&me);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let k = rng.gen_range(1..20);
            let samples: Vec<usize> = (0..k).map(|_| rng.gen_range(0..me.vertices.len())).collect();
            let m = voronoi_masses(&mesh, &me, &phi, &samples).unwrap();
            assert!((m.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(m.masses.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn equalization_does_not_worsen_masses() {
        let mesh = grid(24);
        let me = build_midedge(&mesh).unwrap();
        let phi = fake_phi(&me);
        let plain = voronoi_masses(&mesh, &me, &phi, &fps_sample(&me, 16, 3).unwrap()).unwrap();
        let eq = equal_mass_sample(&mesh, &me, &phi, 16, 3, 0.25 / 16.0).unwrap();
        assert!(eq.max_mass_deviation <= plain.max_mass_deviation);
        assert!(eq.meets_equal_mass_bound(), "{}", eq.max_mass_deviation * 16.0);
    }
}
