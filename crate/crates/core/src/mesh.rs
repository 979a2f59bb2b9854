//! Disk-type triangle meshes: loading, validation, area normalization and
//! the mid-edge companion mesh.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Faces whose area falls below this fraction of the total are flagged degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("mesh is not disk-type (euler={euler}, boundary loops={loops}, non-manifold edges={nonmanifold}, degenerate faces={degenerate})")]
    NotDiskType {
        euler: i64,
        loops: usize,
        nonmanifold: usize,
        degenerate: usize,
    },
    #[error("mesh has zero total area")]
    ZeroArea,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Oriented triangle mesh with derived edge and boundary structure.
///
/// Edges are numbered in order of first appearance while walking the faces,
/// so the numbering is a deterministic function of the face list.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_faces: Vec<Vec<usize>>,
    /// `face_edges[f] = [e(v0,v1), e(v1,v2), e(v2,v0)]`.
    face_edges: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (f, face) in faces.iter().enumerate() {
            if let Some(&index) = face.iter().find(|&&v| v >= count) {
                return Err(MeshError::IndexOutOfRange { face: f, index, count });
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            let mut fe = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[e].push(f);
                fe[k] = e;
            }
            face_edges.push(fe);
        }

        let boundary_loops = trace_boundary_loops(&faces, &face_edges, &edge_faces);
        Ok(TriMesh {
            vertices,
            faces,
            edges,
            edge_faces,
            face_edges,
            boundary_loops,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Faces incident to edge `e` (1 or 2 on a manifold mesh with boundary).
    pub fn edge_faces(&self, e: usize) -> &[usize] {
        &self.edge_faces[e]
    }

    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    /// The boundary loop of a disk-type mesh (empty for closed meshes).
    pub fn boundary_loop(&self) -> &[usize] {
        self.boundary_loops.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_faces[e].len() == 1
    }

    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for (e, [a, b]) in self.edges.iter().enumerate() {
            if self.is_boundary_edge(e) {
                mask[*a] = true;
                mask[*b] = true;
            }
        }
        mask
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        (self.vertices[a] + self.vertices[b] + self.vertices[c]) / 3.0
    }

    /// Unit normal following the face orientation.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        n / n.norm()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[a] - self.vertices[b]).norm()
    }

    /// Apply a map to every vertex position, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> TopologyReport {
        validate(self)
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn trace_boundary_loops(
    faces: &[[usize; 3]],
    face_edges: &[[usize; 3]],
    edge_faces: &[Vec<usize>],
) -> Vec<Vec<usize>> {
    // Directed boundary half-edges in face orientation, grouped by tail vertex.
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    for (f, face) in faces.iter().enumerate() {
        for k in 0..3 {
            if edge_faces[face_edges[f][k]].len() == 1 {
                let id = heads.len();
                tails.push(face[k]);
                heads.push(face[(k + 1) % 3]);
                outgoing.entry(face[k]).or_default().push(id);
            }
        }
    }
    let mut used = vec![false; heads.len()];
    let mut loops = Vec::new();
    for start in 0..heads.len() {
        if used[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            lp.push(tails[cur]);
            let next = outgoing
                .get(&heads[cur])
                .and_then(|ids| ids.iter().copied().find(|&id| !used[id]));
            match next {
                Some(n) => cur = n,
                None => break,
            }
        }
        loops.push(lp);
    }
    loops
}

/// Topological and geometric health of a mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyReport {
    pub euler_characteristic: i64,
    pub boundary_loop_count: usize,
    pub nonmanifold_edges: Vec<usize>,
    pub degenerate_faces: Vec<usize>,
    pub is_disk_type: bool,
}

pub fn validate(mesh: &TriMesh) -> TopologyReport {
    let v = mesh.vertices.len() as i64;
    let e = mesh.edges.len() as i64;
    let f = mesh.faces.len() as i64;
    let euler_characteristic = v - e + f;
    let nonmanifold_edges: Vec<usize> = (0..mesh.edges.len())
        .filter(|&e| mesh.edge_faces[e].len() > 2)
        .collect();
    let total = mesh.total_area();
    let degenerate_faces: Vec<usize> = (0..mesh.faces.len())
        .filter(|&f| {
            let [a, b, c] = mesh.faces[f];
            a == b || b == c || a == c || mesh.face_area(f) < DEGENERATE_AREA_RATIO * total
        })
        .collect();
    let boundary_loop_count = mesh.boundary_loops.len();
    let is_disk_type = euler_characteristic == 1
        && boundary_loop_count == 1
        && nonmanifold_edges.is_empty()
        && degenerate_faces.is_empty();
    TopologyReport {
        euler_characteristic,
        boundary_loop_count,
        nonmanifold_edges,
        degenerate_faces,
        is_disk_type,
    }
}

fn require_disk(mesh: &TriMesh) -> Result<(), MeshError> {
    let report = validate(mesh);
    if report.is_disk_type {
        Ok(())
    } else {
        Err(MeshError::NotDiskType {
            euler: report.euler_characteristic,
            loops: report.boundary_loop_count,
            nonmanifold: report.nonmanifold_edges.len(),
            degenerate: report.degenerate_faces.len(),
        })
    }
}

/// Scale a mesh about the origin to unit total area. Returns the scale factor.
pub fn normalize_area(mesh: &TriMesh) -> Result<(TriMesh, f64), MeshError> {
    let area = mesh.total_area();
    if !(area > 0.0) || !area.is_finite() {
        return Err(MeshError::ZeroArea);
    }
    let scale = 1.0 / area.sqrt();
    Ok((mesh.map_vertices(|p| p * scale), scale))
}

/// The "lace" of medial triangles: one vertex per parent edge, one face per
/// parent face. Mid-edge vertex `r` sits on parent edge `r`; mid-edge face
/// `f` sits in parent face `f` and lists `[m(v0,v1), m(v1,v2), m(v2,v0)]`.
#[derive(Debug, Clone)]
pub struct MidEdgeMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Mid-edge faces touching each mid-edge vertex (one or two).
    pub vertex_faces: Vec<Vec<usize>>,
    /// Whether each mid-edge vertex sits on a boundary edge of the parent.
    pub on_boundary: Vec<bool>,
}

impl MidEdgeMesh {
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn parent_edge(&self, r: usize) -> usize {
        r
    }

    pub fn parent_face(&self, f: usize) -> usize {
        f
    }
}

pub fn build_midedge(mesh: &TriMesh) -> Result<MidEdgeMesh, MeshError> {
    require_disk(mesh)?;
    let vertices = mesh
        .edges
        .iter()
        .map(|[a, b]| (mesh.vertices[*a] + mesh.vertices[*b]) * 0.5)
        .collect();
    let faces = mesh.face_edges.clone();
    let on_boundary = (0..mesh.edges.len()).map(|e| mesh.is_boundary_edge(e)).collect();
    Ok(MidEdgeMesh {
        vertices,
        faces,
        vertex_faces: mesh.edge_faces.clone(),
        on_boundary,
    })
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse { line, msg: msg.into() }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad number `{tok}`")))
}

pub fn load_mesh<R: Read>(source: R, format: MeshFormat) -> Result<TriMesh, MeshError> {
    match format {
        MeshFormat::Off => load_off(source),
        MeshFormat::Obj => load_obj(source),
    }
}

pub fn load_mesh_file(path: &Path) -> Result<TriMesh, MeshError> {
    let format = MeshFormat::from_path(path)?;
    load_mesh(std::fs::File::open(path)?, format)
}

fn load_off<R: Read>(source: R) -> Result<TriMesh, MeshError> {
    let reader = BufReader::new(source);
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim().to_string();
        if !content.is_empty() {
            lines.push((i + 1, content));
        }
    }
    let mut it = lines.into_iter();
    let (hline, header) = it.next().ok_or_else(|| parse_err(0, "empty file"))?;
    let mut header_toks = header.split_whitespace();
    if header_toks.next() != Some("OFF") {
        return Err(parse_err(hline, "missing OFF header"));
    }
    let rest: Vec<&str> = header_toks.collect();
    let counts_line = if rest.is_empty() {
        it.next().ok_or_else(|| parse_err(hline, "missing counts line"))?
    } else {
        (hline, rest.join(" "))
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(counts_line.0, "bad count")))
        .collect::<Result<_, _>>()?;
    if counts.len() < 2 {
        return Err(parse_err(counts_line.0, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it.next().ok_or_else(|| parse_err(0, "unexpected end of vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_f64(t.next(), ln)?;
        let y = parse_f64(t.next(), ln)?;
        let z = parse_f64(t.next(), ln)?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = it.next().ok_or_else(|| parse_err(0, "unexpected end of face list"))?;
        let toks: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad index `{t}`"))))
            .collect::<Result<_, _>>()?;
        if toks.first() != Some(&3) || toks.len() < 4 {
            return Err(parse_err(ln, "only triangular faces (`3 i j k`) are supported"));
        }
        faces.push([toks[1], toks[2], toks[3]]);
    }
    TriMesh::new(vertices, faces)
}

fn load_obj<R: Read>(source: R) -> Result<TriMesh, MeshError> {
    let reader = BufReader::new(source);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let ln = i + 1;
        let line = line?;
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => {
                let x = parse_f64(t.next(), ln)?;
                let y = parse_f64(t.next(), ln)?;
                let z = parse_f64(t.next(), ln)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<i64> = t
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .map_err(|_| parse_err(ln, format!("bad face index `{tok}`")))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(ln, "only triangular faces are supported"));
                }
                let mut face = [0usize; 3];
                for (k, &raw) in idx.iter().enumerate() {
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(parse_err(ln, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(MeshError::IndexOutOfRange {
                            face: faces.len(),
                            index: raw.unsigned_abs() as usize,
                            count: vertices.len(),
                        });
                    }
                    face[k] = resolved as usize;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

/// Serialize as ASCII OFF. Coordinates use the shortest round-trip decimal form.
pub fn to_off(mesh: &TriMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.faces.len());
    for p in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for [a, b, c] in &mesh.faces {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for p in &mesh.vertices {
        let _ = writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for [a, b, c] in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    out
}

pub fn write_mesh(mesh: &TriMesh, format: MeshFormat) -> String {
    match format {
        MeshFormat::Off => to_off(mesh),
        MeshFormat::Obj => to_obj(mesh),
    }
}
