//! End-to-end comparison of disk-type surfaces.
//!
//! `compare` runs: area normalization, uniformization, sampling, density
//! fit, cost matrix, transport and consistency scoring. All randomness is
//! derived from `PipelineConfig::seed` through ChaCha8 with one stream per
//! stage (see [`Stream`]), so each stage is reproducible on its own.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{score_correspondences, ConsistencyError, ScoredCorrespondence};
use crate::density::{fit_density, ConformalDensity, DensityError, DEFAULT_LAMBDA};
use crate::local_distance::{cost_matrix, CostMatrix, LocalDistanceConfig, LocalDistanceError, DEFAULT_MOBIUS_STEPS, MIN_MOBIUS_STEPS};
use crate::mds::{mds_embed, Embedding, MdsError};
use crate::mesh::{normalize_area, validate, MeshError, TriMesh};
use crate::quadrature::QuadratureGrid;
use crate::sampling::{equal_mass_sample, fps_sample, voronoi_masses, DiscreteMeasure, SamplingError};
use crate::transport::{extract_correspondence, solve_transport, TransportError, TransportMode, TransportPlan, TransportProblem};
use crate::uniformize::{uniformize, UniformizeError, UniformizeOptions, Uniformization};

/// Largest neighborhood radius accepted; `tanh(8)` is already within 1e-6 of 1.
pub const MAX_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Samples per surface.
    pub n: usize,
    /// Hyperbolic radius of the comparison neighborhoods.
    pub radius: f64,
    /// Quadrature points per neighborhood.
    pub k: usize,
    /// Rotation steps in the Möbius search.
    pub l: usize,
    /// TPS smoothing factor.
    pub lambda: f64,
    /// Transported mass fraction; 1 is full transport.
    pub q: f64,
    pub seed: u64,
    /// Relocate samples toward equal Voronoi masses and transport uniform masses.
    pub equal_mass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n: 150,
            radius: 1.0,
            k: 300,
            l: DEFAULT_MOBIUS_STEPS,
            lambda: DEFAULT_LAMBDA,
            q: 1.0,
            seed: 0,
            equal_mass: false,
            out: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if !(self.radius > 0.0 && self.radius <= MAX_RADIUS) {
            return fail(format!("radius must lie in (0, {MAX_RADIUS}], got {}", self.radius));
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.l < MIN_MOBIUS_STEPS {
            return fail(format!("l must be at least {MIN_MOBIUS_STEPS}, got {}", self.l));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return fail(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return fail(format!("q must lie in (0, 1], got {}", self.q));
        }
        Ok(())
    }

    pub fn transport_mode(&self) -> TransportMode {
        if self.q == 1.0 {
            TransportMode::Full
        } else {
            TransportMode::Partial(self.q)
        }
    }

    /// Seed for one stage, drawn from stream `stream` of ChaCha8 keyed by `seed`.
    pub fn stage_seed(&self, stream: Stream) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng.next_u64()
    }
}

/// Random streams, one per randomized stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    SampleFirst = 1,
    SampleSecond = 2,
    Quadrature = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Mesh,
    Uniformize,
    Sample,
    Density,
    CostMatrix,
    Transport,
    Consistency,
    Embed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Mesh => "mesh",
            Stage::Uniformize => "uniformize",
            Stage::Sample => "sample",
            Stage::Density => "density",
            Stage::CostMatrix => "cost-matrix",
            Stage::Transport => "transport",
            Stage::Consistency => "consistency",
            Stage::Embed => "embed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Uniformize(#[from] UniformizeError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    LocalDistance(#[from] LocalDistanceError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    Mds(#[from] MdsError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("[{stage}] {context}: {source}")]
    Stage {
        stage: Stage,
        context: String,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    fn at(stage: Stage, context: impl Into<String>) -> impl FnOnce(StageError) -> PipelineError {
        let context = context.into();
        move |source| PipelineError::Stage { stage, context, source }
    }

    /// Whether the failure is a problem with the inputs rather than a
    /// numerical breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            PipelineError::Config(_) => true,
            PipelineError::Stage { source, .. } => matches!(
                source,
                StageError::Mesh(_)
                    | StageError::Uniformize(UniformizeError::Mesh(_) | UniformizeError::InvalidExcisedFace(_) | UniformizeError::NoInteriorFace)
                    | StageError::Sampling(_)
                    | StageError::Consistency(ConsistencyError::TooManyRequested { .. } | ConsistencyError::PairOutOfRange(..))
                    | StageError::Mds(_)
                    | StageError::LocalDistance(LocalDistanceError::TooFewSteps(_))
                    | StageError::Transport(TransportError::InvalidFraction(_) | TransportError::Shape { .. })
            ),
        }
    }
}

/// A mesh with the label used in reports.
#[derive(Debug, Clone)]
pub struct NamedMesh {
    pub id: String,
    pub mesh: TriMesh,
}

impl NamedMesh {
    pub fn new(id: impl Into<String>, mesh: TriMesh) -> Self {
        NamedMesh { id: id.into(), mesh }
    }
}

/// One surface carried through uniformization, sampling and density fit.
#[derive(Debug, Clone)]
pub struct PreparedSurface {
    pub id: String,
    /// Unit-area copy of the input.
    pub mesh: TriMesh,
    pub scale: f64,
    pub uniformization: Uniformization,
    pub measure: DiscreteMeasure,
    pub density: ConformalDensity,
}

pub fn check_disk(named: &NamedMesh) -> Result<(), PipelineError> {
    let report = validate(&named.mesh);
    if report.is_disk_type {
        return Ok(());
    }
    let err = MeshError::NotDiskType {
        euler: report.euler_characteristic,
        loops: report.boundary_loop_count,
        nonmanifold: report.nonmanifold_edges.len(),
        degenerate: report.degenerate_faces.len(),
    };
    Err(PipelineError::at(Stage::Mesh, named.id.clone())(err.into()))
}

pub fn uniformize_surface(named: &NamedMesh) -> Result<(TriMesh, f64, Uniformization), PipelineError> {
    check_disk(named)?;
    let (mesh, scale) = normalize_area(&named.mesh).map_err(|e| PipelineError::at(Stage::Mesh, named.id.clone())(e.into()))?;
    let u = uniformize(&mesh, &UniformizeOptions::default()).map_err(|e| PipelineError::at(Stage::Uniformize, named.id.clone())(e.into()))?;
    Ok((mesh, scale, u))
}

/// Deviation from `1/N` the equal-mass search aims for; half the bound
/// `DiscreteMeasure::meets_equal_mass_bound` checks.
fn equal_mass_target(n: usize) -> f64 {
    0.25 / n as f64
}

pub fn sample_surface(mesh: &TriMesh, u: &Uniformization, cfg: &PipelineConfig, seed: u64) -> Result<DiscreteMeasure, SamplingError> {
    if cfg.equal_mass {
        equal_mass_sample(mesh, &u.midedge, &u.disk.phi, cfg.n, seed, equal_mass_target(cfg.n))
    } else {
        let samples = fps_sample(&u.midedge, cfg.n, seed)?;
        voronoi_masses(mesh, &u.midedge, &u.disk.phi, &samples)
    }
}

/// Fit the hyperbolic conformal factor over all mid-edge vertices with the
/// samples as centers. Fewer than three samples are topped up with further
/// FPS points so the linear part is determined.
pub fn fit_surface_density(u: &Uniformization, measure: &DiscreteMeasure, cfg: &PipelineConfig, seed: u64) -> Result<ConformalDensity, StageError> {
    let mut centers = measure.disk.clone();
    if centers.len() < 3 {
        for idx in fps_sample(&u.midedge, 3, seed)? {
            let z = u.disk.phi[idx];
            if centers.len() < 3 && !centers.contains(&z) {
                centers.push(z);
            }
        }
    }
    Ok(fit_density(&centers, &u.disk.phi, &u.factors.mu_h_vertex, cfg.lambda)?)
}

pub fn prepare_surface(named: &NamedMesh, cfg: &PipelineConfig, seed: u64) -> Result<PreparedSurface, PipelineError> {
    cfg.validate()?;
    let (mesh, scale, u) = uniformize_surface(named)?;
    let ctx = || named.id.clone();
    let measure = sample_surface(&mesh, &u, cfg, seed).map_err(|e| PipelineError::at(Stage::Sample, ctx())(e.into()))?;
    let density = fit_surface_density(&u, &measure, cfg, seed).map_err(PipelineError::at(Stage::Density, ctx()))?;
    Ok(PreparedSurface {
        id: named.id.clone(),
        mesh,
        scale,
        uniformization: u,
        measure,
        density,
    })
}

pub fn build_grid(cfg: &PipelineConfig) -> QuadratureGrid {
    QuadratureGrid::build(cfg.radius, cfg.k, cfg.stage_seed(Stream::Quadrature))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub a: String,
    pub b: String,
    /// Transport objective; the surface distance.
    pub t: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub config: PipelineConfig,
    /// Wall-clock seconds; left out of JSON so outputs are reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub record: DistanceRecord,
    pub plan: TransportPlan,
    pub costs: CostMatrix,
    /// Matched pairs ordered by row.
    pub pairs: Vec<(usize, usize)>,
    pub scored: Vec<ScoredCorrespondence>,
}

/// Matched pairs of a plan. Equal-mass plans must be permutation-like;
/// otherwise every pair in the support of the plan is returned.
fn matched_pairs(plan: &TransportPlan, equal_mass: bool) -> Result<Vec<(usize, usize)>, TransportError> {
    if equal_mass && plan.pi.len() == plan.pi.first().map_or(0, Vec::len) {
        return extract_correspondence(plan, plan.pi.len());
    }
    let mut pairs = Vec::new();
    for (i, row) in plan.pi.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > crate::transport::INTEGRALITY_TOL {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// Transport between two prepared surfaces.
pub fn compare_prepared(a: &PreparedSurface, b: &PreparedSurface, grid: &QuadratureGrid, cfg: &PipelineConfig) -> Result<Comparison, PipelineError> {
    let start = Instant::now();
    let ctx = format!("{} vs {}", a.id, b.id);
    let ld = LocalDistanceConfig::new(grid.clone(), cfg.l).map_err(|e| PipelineError::at(Stage::CostMatrix, ctx.clone())(e.into()))?;
    let costs = cost_matrix(&a.density, &b.density, &a.measure.disk, &b.measure.disk, &ld).map_err(|e| PipelineError::at(Stage::CostMatrix, ctx.clone())(e.into()))?;

    let transport = |e: TransportError| PipelineError::at(Stage::Transport, ctx.clone())(e.into());
    let problem = if cfg.equal_mass {
        TransportProblem::uniform(costs.d.clone(), cfg.transport_mode())
    } else {
        TransportProblem::new(costs.d.clone(), a.measure.masses.clone(), b.measure.masses.clone(), cfg.transport_mode())
    }
    .map_err(transport)?;
    let plan = solve_transport(&problem).map_err(transport)?;
    let pairs = matched_pairs(&plan, cfg.equal_mass).map_err(transport)?;

    let scored = if pairs.len() >= 2 {
        let mut s = score_correspondences(&pairs, &costs).map_err(|e| PipelineError::at(Stage::Consistency, ctx.clone())(e.into()))?;
        s.sort_by(|x, y| x.variance.total_cmp(&y.variance).then(x.i.cmp(&y.i)).then(x.j.cmp(&y.j)));
        s
    } else {
        Vec::new()
    };
    let seconds = start.elapsed().as_secs_f64();
    log::info!("{ctx}: T = {:.6e} ({} pivots, {seconds:.1} s)", plan.objective, plan.pivots);
    Ok(Comparison {
        record: DistanceRecord {
            a: a.id.clone(),
            b: b.id.clone(),
            t: plan.objective.max(0.0),
            n_a: a.measure.len(),
            n_b: b.measure.len(),
            config: cfg.clone(),
            seconds,
        },
        plan,
        costs,
        pairs,
        scored,
    })
}

/// Compare two surfaces. The first is sampled from stream
/// `Stream::SampleFirst`, the second from `Stream::SampleSecond`, so a
/// surface compared with itself is sampled independently on each side.
pub fn compare(a: &NamedMesh, b: &NamedMesh, cfg: &PipelineConfig) -> Result<Comparison, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let pa = prepare_surface(a, cfg, cfg.stage_seed(Stream::SampleFirst))?;
    let pb = prepare_surface(b, cfg, cfg.stage_seed(Stream::SampleSecond))?;
    let mut c = compare_prepared(&pa, &pb, &build_grid(cfg), cfg)?;
    c.record.seconds = start.elapsed().as_secs_f64();
    Ok(c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceTable {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub config: PipelineConfig,
}

impl DistanceTable {
    /// Header row of labels, then one labeled row per surface.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise distances. Entry `(i, j)` with `i < j` is `compare(M_i, M_j)`;
/// pairs run concurrently and the diagonal is zero.
pub fn matrix(meshes: &[NamedMesh], cfg: &PipelineConfig) -> Result<DistanceTable, PipelineError> {
    cfg.validate()?;
    if meshes.len() < 2 {
        return Err(PipelineError::Config(format!("need at least 2 meshes, got {}", meshes.len())));
    }
    let n = meshes.len();
    let first: Vec<PreparedSurface> = meshes
        .par_iter()
        .map(|m| prepare_surface(m, cfg, cfg.stage_seed(Stream::SampleFirst)))
        .collect::<Result<_, _>>()?;
    let second: Vec<PreparedSurface> = meshes
        .par_iter()
        .map(|m| prepare_surface(m, cfg, cfg.stage_seed(Stream::SampleSecond)))
        .collect::<Result<_, _>>()?;
    let grid = build_grid(cfg);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| compare_prepared(&first[i], &second[j], &grid, cfg).map(|c| c.record.t))
        .collect::<Result<_, _>>()?;
    let mut values = vec![vec![0.0; n]; n];
    for (&(i, j), t) in pairs.iter().zip(results) {
        values[i][j] = t;
        values[j][i] = t;
    }
    Ok(DistanceTable {
        labels: meshes.iter().map(|m| m.id.clone()).collect(),
        values,
        config: cfg.clone(),
    })
}

pub fn embed(table: &DistanceTable, dim: usize) -> Result<Embedding, PipelineError> {
    mds_embed(&table.values, dim).map_err(|e| PipelineError::at(Stage::Embed, "distance table")(e.into()))
}
