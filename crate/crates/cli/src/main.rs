use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use conformal_ot::consistency::filter_top;
use conformal_ot::consistency::ScoredCorrespondence;
use conformal_ot::local_distance::LocalDistanceConfig;
use conformal_ot::mesh::{load_mesh_file, write_mesh, MeshFormat};
use conformal_ot::pipeline::{
    self, build_grid, compare, prepare_surface, uniformize_surface, DistanceTable, NamedMesh, PipelineConfig, PipelineError, Stream,
};
use conformal_ot::synth::{synth_surface, SurfaceKind};
use conformal_ot::transport::{solve_transport, TransportProblem};
use conformal_ot::uniformize::slit_flatness;
use serde::{Deserialize, Serialize};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "conformal-ot", version, about = "Conformal optimal-transport distances between disk-type surfaces")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Samples per surface.
    #[arg(long, global = true, default_value_t = 150)]
    n: usize,
    /// Hyperbolic neighborhood radius.
    #[arg(long = "r", global = true, default_value_t = 1.0)]
    radius: f64,
    /// Quadrature points per neighborhood.
    #[arg(long, global = true, default_value_t = 300)]
    k: usize,
    /// Rotation steps in the Möbius search.
    #[arg(long, global = true, default_value_t = 32)]
    l: usize,
    /// TPS smoothing factor in (0, 1].
    #[arg(long, global = true, default_value_t = 0.99)]
    lambda: f64,
    /// Transported mass fraction in (0, 1].
    #[arg(long, global = true, default_value_t = 1.0)]
    q: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "CONFORMAL_OT_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output file. `matrix` writes `<out>.csv` and `<out>.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Equalize Voronoi masses and transport uniform masses.
    #[arg(long, global = true)]
    equal_mass: bool,
}

impl Global {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            n: self.n,
            radius: self.radius,
            k: self.k,
            l: self.l,
            lambda: self.lambda,
            q: self.q,
            seed: self.seed,
            equal_mass: self.equal_mass,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Map a mesh to the unit disk and report conformal factors.
    Uniformize { mesh: PathBuf },
    /// Sample a mesh and report disk positions and Voronoi masses.
    Sample { mesh: PathBuf },
    /// Fit the TPS density of a mesh.
    Density { mesh: PathBuf },
    /// Cost matrix between the samples of two meshes.
    Distmat { a: PathBuf, b: PathBuf },
    /// Solve a transport problem given as JSON `{"cost": [[..]], "mu": [..], "nu": [..]}`.
    Transport { problem: PathBuf },
    /// Keep the `top` most consistent pairs of a `compare` result.
    Filter {
        comparison: PathBuf,
        #[arg(long)]
        top: usize,
    },
    /// Distance between two meshes.
    Compare { a: PathBuf, b: PathBuf },
    /// Pairwise distance table of several meshes.
    Matrix {
        #[arg(required = true, num_args = 2..)]
        meshes: Vec<PathBuf>,
    },
    /// Classical MDS of a `matrix` JSON table.
    Embed {
        table: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Write a synthetic disk-type surface.
    Synth {
        /// flat-disk, gaussian-bump, two-bumps or bent-sheet.
        kind: String,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        height: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        /// Bend angle in degrees.
        #[arg(long)]
        angle: Option<f64>,
        /// off or obj; defaults to the extension of --out, else off.
        #[arg(long)]
        format: Option<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Numerical(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn named(path: &Path) -> Result<NamedMesh> {
    let mesh = load_mesh_file(path).with_context(|| format!("loading {}", path.display()))?;
    let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(NamedMesh::new(id, mesh))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing output")?;
    text.push('\n');
    emit_text(out, &text)
}

#[derive(Serialize)]
struct UniformizeReport<'a> {
    id: &'a str,
    scale: f64,
    excised_face: usize,
    harmonic_residual: f64,
    slit_flatness: f64,
    disk: &'a [num_complex::Complex64],
    mu_e: &'a [f64],
    mu_h: &'a [f64],
}

#[derive(Deserialize)]
struct TransportInput {
    #[serde(alias = "d")]
    cost: Vec<Vec<f64>>,
    mu: Option<Vec<f64>>,
    nu: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct FilterInput {
    scored: Vec<ScoredCorrespondence>,
}

#[derive(Deserialize)]
struct EmbedInput {
    #[serde(default)]
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EmbedOutput {
    labels: Vec<String>,
    #[serde(flatten)]
    embedding: conformal_ot::mds::Embedding,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.config();
    let out = cli.global.out.as_deref();
    match cli.command {
        Command::Uniformize { mesh } => {
            let m = named(&mesh)?;
            let (_, scale, u) = uniformize_surface(&m)?;
            emit(
                out,
                &UniformizeReport {
                    id: &m.id,
                    scale,
                    excised_face: u.field.excised_face,
                    harmonic_residual: u.field.relative_residual,
                    slit_flatness: slit_flatness(&u.slit),
                    disk: &u.disk.phi,
                    mu_e: &u.factors.mu_e_vertex,
                    mu_h: &u.factors.mu_h_vertex,
                },
            )
        }
        Command::Sample { mesh } => {
            let p = prepare_surface(&named(&mesh)?, &cfg, cfg.stage_seed(Stream::SampleFirst))?;
            emit(out, &p.measure)
        }
        Command::Density { mesh } => {
            let p = prepare_surface(&named(&mesh)?, &cfg, cfg.stage_seed(Stream::SampleFirst))?;
            emit(out, &p.density)
        }
        Command::Distmat { a, b } => {
            cfg.validate()?;
            let pa = prepare_surface(&named(&a)?, &cfg, cfg.stage_seed(Stream::SampleFirst))?;
            let pb = prepare_surface(&named(&b)?, &cfg, cfg.stage_seed(Stream::SampleSecond))?;
            let ld = LocalDistanceConfig::new(build_grid(&cfg), cfg.l).map_err(|e| Failure::Validation(e.into()))?;
            let costs = conformal_ot::local_distance::cost_matrix(&pa.density, &pb.density, &pa.measure.disk, &pb.measure.disk, &ld)
                .map_err(|e| Failure::Numerical(e.into()))?;
            emit(out, &costs)
        }
        Command::Transport { problem } => {
            let input: TransportInput = read_json(&problem)?;
            let p = match (input.mu, input.nu) {
                (Some(mu), Some(nu)) => TransportProblem::new(input.cost, mu, nu, cfg.transport_mode()),
                (None, None) => TransportProblem::uniform(input.cost, cfg.transport_mode()),
                _ => return Err(Failure::Validation(anyhow::anyhow!("give both mu and nu or neither"))),
            }
            .map_err(|e| Failure::Validation(e.into()))?;
            let plan = solve_transport(&p).map_err(|e| Failure::Numerical(e.into()))?;
            emit(out, &plan)
        }
        Command::Filter { comparison, top } => {
            let input: FilterInput = read_json(&comparison)?;
            let kept = filter_top(&input.scored, top).map_err(|e| Failure::Validation(e.into()))?;
            emit(out, &kept)
        }
        Command::Compare { a, b } => {
            let c = compare(&named(&a)?, &named(&b)?, &cfg)?;
            log::info!("{} vs {}: T = {:e} in {:.1} s", c.record.a, c.record.b, c.record.t, c.record.seconds);
            emit(out, &c)
        }
        Command::Matrix { meshes } => {
            let list = meshes.iter().map(|p| named(p)).collect::<Result<Vec<_>>>()?;
            let table = pipeline::matrix(&list, &cfg)?;
            match out {
                Some(base) => {
                    emit_text(Some(&base.with_extension("csv")), &table.to_csv())?;
                    emit(Some(&base.with_extension("json")), &table)
                }
                None => emit_text(None, &table.to_csv()),
            }
        }
        Command::Embed { table, dim } => {
            let input: EmbedInput = read_json(&table)?;
            let t = DistanceTable { labels: input.labels, values: input.values, config: cfg };
            let embedding = pipeline::embed(&t, dim)?;
            emit(out, &EmbedOutput { labels: t.labels, embedding })
        }
        Command::Synth { kind, resolution, height, width, angle, format } => {
            let kind = SurfaceKind::from_name(&kind, height, width, angle).map_err(|e| Failure::Validation(e.into()))?;
            let mesh = synth_surface(kind, resolution).map_err(|e| Failure::Validation(e.into()))?;
            let format = match format.as_deref() {
                Some("obj") => MeshFormat::Obj,
                Some("off") => MeshFormat::Off,
                Some(other) => return Err(Failure::Validation(anyhow::anyhow!("unknown mesh format `{other}`"))),
                None => out.and_then(|p| MeshFormat::from_path(p).ok()).unwrap_or(MeshFormat::Off),
            };
            emit_text(out, &write_mesh(&mesh, format))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
