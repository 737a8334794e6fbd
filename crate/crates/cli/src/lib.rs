//! Subcommands behind the `neurcross` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurcross::analysis::{
    alignment_error, export_field, sdf_fit_stats, singularities, AlignmentStats, Oracle, SdfFitStats,
    SingularityReport,
};
use neurcross::angle::AngleMode;
use neurcross::checkpoint::Checkpoint;
use neurcross::feature_lines::{feature_weights, FeatureLines, FeatureWeights};
use neurcross::losses::loss_smoothness;
use neurcross::mesh::{Normalization, TriMesh};
use neurcross::obj::ObjData;
use neurcross::quad::{evaluate, MetricsReport, QuadMesh, DEFAULT_SAMPLES};
use neurcross::train::{extract_field, train, TrainConfig};
use neurcross::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const FIELD_FILE: &str = "field.rosy";
pub const SINGULARITY_FILE: &str = "singularities.json";

#[derive(Debug, Parser)]
#[command(name = "neurcross", version, about = "Neural SDF and cross-field optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the SDF and cross field on a mesh.
    Fit(FitArgs),
    /// Singularities, smoothness, SDF fit and optional alignment for a checkpoint.
    Analyze(AnalyzeArgs),
    /// Write the cross field of a checkpoint in the ROSY exchange format.
    ExportField(ExportArgs),
    /// Quality metrics of a quad mesh against a reference triangle mesh.
    EvalQuad(EvalQuadArgs),
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// JSON run config, or the manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// SDF-only pretraining followed by field-only training.
    #[arg(long)]
    pub two_step: bool,
    /// Free per-face angles instead of the angle network.
    #[arg(long)]
    pub direct: bool,
    /// OBJ file whose `l` records mark feature lines on the mesh vertices.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Mark edges sharper than this dihedral angle (degrees) as features.
    #[arg(long)]
    pub sharp_deg: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    /// `torus`, `cylinder[:x,y,z]` or `ellipsoid:a,b,c` (normalized units).
    #[arg(long)]
    pub oracle: Option<OracleArg>,
    /// Seed for the near-surface samples of the SDF statistics.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalQuadArgs {
    #[arg(long)]
    pub quad: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate in file coordinates instead of the reference's normalized frame.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleArg(pub Oracle);

impl FromStr for OracleArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> std::result::Result<Vec<f64>, String> {
            rest.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
                .collect()
        };
        let oracle = match kind {
            "torus" if rest.is_empty() => Oracle::Torus,
            "cylinder" if rest.is_empty() => Oracle::Cylinder { axis: [0.0, 0.0, 1.0] },
            "cylinder" => match nums()?.as_slice() {
                &[x, y, z] => Oracle::Cylinder { axis: [x, y, z] },
                _ => return Err("cylinder takes an axis x,y,z".into()),
            },
            "ellipsoid" => match nums()?.as_slice() {
                &[a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 => Oracle::Ellipsoid { a, b, c },
                _ => return Err("ellipsoid takes positive semi-axes a,b,c".into()),
            },
            _ => return Err(format!("unknown oracle `{s}`")),
        };
        Ok(Self(oracle))
    }
}

/// Everything needed to reproduce a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FitConfig {
    pub mesh: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub feature_lines: Option<PathBuf>,
    pub sharp_angle_deg: Option<f64>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub mesh: PathBuf,
    pub mesh_sha256: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// `joint` or `two_step`.
    pub mode: String,
    pub angle_mode: AngleMode,
    pub normalization: NormalizationRecord,
    pub feature_faces: usize,
    /// Resolved configuration after flags were applied.
    pub config: FitConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub center: [f64; 3],
    pub scale: f64,
}

impl From<Normalization> for NormalizationRecord {
    fn from(n: Normalization) -> Self {
        Self {
            center: [n.center.x, n.center.y, n.center.z],
            scale: n.scale,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, pretty(value) + "\n").map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A plain run config, or the `config` block of a run manifest.
pub fn load_fit_config(path: &Path) -> Result<FitConfig> {
    let value: serde_json::Value = read_json(path)?;
    let block = match value.get("subcommand").and_then(|s| s.as_str()) {
        Some("fit") => value.get("config").cloned().unwrap_or_default(),
        _ => value,
    };
    serde_json::from_value(block).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Config file values overridden by command-line flags.
pub fn resolve_fit_config(args: &FitArgs) -> Result<FitConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_fit_config(p)?,
        None => FitConfig::default(),
    };
    if let Some(m) = &args.mesh {
        cfg.mesh = Some(m.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(f) = &args.features {
        cfg.feature_lines = Some(f.clone());
    }
    if args.sharp_deg.is_some() {
        cfg.sharp_angle_deg = args.sharp_deg;
    }
    let t = &mut cfg.train;
    if let Some(v) = args.iters {
        t.iterations = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.lr {
        t.learning_rate = v;
    }
    if let Some(v) = args.log_every {
        t.log_every = v;
    }
    if let Some(v) = args.checkpoint_every {
        t.checkpoint_every = v;
    }
    if args.grad_clip.is_some() {
        t.grad_clip = args.grad_clip;
    }
    if args.two_step {
        t.two_step = true;
    }
    if args.direct {
        t.angle_mode = AngleMode::Direct;
    }
    t.validate()?;
    Ok(cfg)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Mesh in normalized coordinates, with the OBJ's own `l` records.
pub struct LoadedMesh {
    pub mesh: TriMesh,
    pub normalization: Normalization,
    pub lines: FeatureLines,
    pub sha256: String,
}

pub fn load_mesh(path: &Path) -> Result<LoadedMesh> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let data = ObjData::parse(&text)?;
    let lines = FeatureLines::new(data.lines.clone());
    let raw = TriMesh::from_obj(data)?;
    let normalization = raw.normalization()?;
    Ok(LoadedMesh {
        mesh: raw.transformed(&normalization)?,
        normalization,
        lines,
        sha256: sha256_hex(&bytes),
    })
}

fn fit_features(cfg: &FitConfig, loaded: &LoadedMesh) -> Result<Option<FeatureWeights>> {
    let nv = loaded.mesh.vertices().len();
    let lines = if let Some(p) = &cfg.feature_lines {
        FeatureLines::load(p, nv)?
    } else if !loaded.lines.is_empty() {
        loaded.lines.clone()
    } else if let Some(deg) = cfg.sharp_angle_deg {
        FeatureLines::detect_sharp(&loaded.mesh, deg)
    } else {
        return Ok(None);
    };
    if lines.is_empty() {
        return Ok(None);
    }
    feature_weights(&loaded.mesh, &lines, cfg.train.weights.rho_feature).map(Some)
}

pub fn default_output_dir(mesh: &Path, seed: u64) -> PathBuf {
    let stem = mesh.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("runs").join(format!("{stem}_s{seed}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub output_dir: PathBuf,
    pub iterations: usize,
    pub final_total: f64,
    pub final_smoothness: f64,
    pub singularity_count: Option<usize>,
    pub total_index: Option<f64>,
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitSummary> {
    let cfg = resolve_fit_config(args)?;
    let mesh_path = cfg
        .mesh
        .clone()
        .ok_or_else(|| Error::Config("no mesh given (use --mesh or the config file)".into()))?;
    let loaded = load_mesh(&mesh_path)?;
    let features = fit_features(&cfg, &loaded)?;
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| default_output_dir(&mesh_path, cfg.train.seed));
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: "fit".into(),
        config_path: args.config.clone(),
        mesh: mesh_path.clone(),
        mesh_sha256: loaded.sha256.clone(),
        output_dir: out.clone(),
        seed: cfg.train.seed,
        mode: if cfg.train.two_step { "two_step" } else { "joint" }.into(),
        angle_mode: cfg.train.angle_mode,
        normalization: loaded.normalization.into(),
        feature_faces: features.as_ref().map_or(0, |f| f.constrained_count()),
        config: cfg.clone(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    log::info!(
        "fitting {} ({} faces) for {} iterations into {}",
        mesh_path.display(),
        loaded.mesh.face_count(),
        cfg.train.iterations,
        out.display()
    );
    let result = train(&loaded.mesh, &cfg.train, features.as_ref(), Some(&out))?;
    let field = result.cross_field(&loaded.mesh)?;
    export_field(&field, out.join(FIELD_FILE))?;
    let report = match singularities(&field, &loaded.mesh) {
        Ok(r) => {
            write_json(&out.join(SINGULARITY_FILE), &r)?;
            Some(r)
        }
        Err(e) => {
            log::warn!("singularity analysis skipped: {e}");
            None
        }
    };
    let last = result.history.last();
    Ok(FitSummary {
        output_dir: out,
        iterations: last.map_or(0, |r| r.iter + 1),
        final_total: last.map_or(f64::NAN, |r| r.total),
        final_smoothness: loss_smoothness(&field, &loaded.mesh),
        singularity_count: report.as_ref().map(|r| r.singularity_count),
        total_index: report.as_ref().map(|r| r.total_index),
    })
}

fn load_pair(checkpoint: &Path, mesh: &Path) -> Result<(Checkpoint, LoadedMesh)> {
    let ck = Checkpoint::load(checkpoint)?;
    let loaded = load_mesh(mesh)?;
    if !ck.constrained.is_empty() && ck.constrained.len() != loaded.mesh.face_count() {
        return Err(Error::DimensionMismatch {
            expected: loaded.mesh.face_count(),
            got: ck.constrained.len(),
        });
    }
    Ok((ck, loaded))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentReport {
    #[serde(flatten)]
    pub stats: AlignmentStats,
    pub median_deg: f64,
    pub oracle: Oracle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub faces: usize,
    pub iteration: usize,
    pub stage: String,
    pub smoothness: f64,
    pub sdf: SdfFitStats,
    pub singularities: SingularityReport,
    pub alignment: Option<AlignmentReport>,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<AnalysisReport> {
    let (ck, loaded) = load_pair(&args.checkpoint, &args.mesh)?;
    let mesh = &loaded.mesh;
    let field = extract_field(&ck.angle, &ck.constrained, mesh)?;
    let alignment = match args.oracle {
        Some(OracleArg(o)) => {
            let stats = alignment_error(&field, mesh, &o)?;
            Some(AlignmentReport {
                median_deg: stats.median_deg(),
                stats,
                oracle: o,
            })
        }
        None => None,
    };
    let report = AnalysisReport {
        faces: mesh.face_count(),
        iteration: ck.iteration,
        stage: ck.stage.clone(),
        smoothness: loss_smoothness(&field, mesh),
        sdf: sdf_fit_stats(&ck.sdf, mesh, TrainConfig::default().k_neighbors, args.seed)?,
        singularities: singularities(&field, mesh)?,
        alignment,
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

pub fn cmd_export(args: &ExportArgs) -> Result<usize> {
    let (ck, loaded) = load_pair(&args.checkpoint, &args.mesh)?;
    let field = extract_field(&ck.angle, &ck.constrained, &loaded.mesh)?;
    export_field(&field, &args.out)?;
    Ok(field.len())
}

pub fn cmd_eval_quad(args: &EvalQuadArgs) -> Result<MetricsReport> {
    let quad = QuadMesh::load(&args.quad)?;
    let reference = TriMesh::load(&args.reference)?;
    let (quad, reference) = if args.raw {
        (quad, reference)
    } else {
        let n = reference.normalization()?;
        let moved = quad
            .vertices()
            .iter()
            .map(|p| nalgebra::Point3::from((p - n.center) * n.scale))
            .collect();
        (QuadMesh::new(moved, quad.quads().to_vec())?, reference.transformed(&n)?)
    };
    let report = evaluate(&quad, &reference, args.samples, args.seed)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

/// Runs one subcommand and returns its JSON result for printing.
pub fn run(cli: &Cli) -> Result<String> {
    Ok(match &cli.command {
        Command::Fit(a) => pretty(&cmd_fit(a)?),
        Command::Analyze(a) => pretty(&cmd_analyze(a)?),
        Command::ExportField(a) => {
            let faces = cmd_export(a)?;
            pretty(&serde_json::json!({ "faces": faces, "path": a.out }))
        }
        Command::EvalQuad(a) => pretty(&cmd_eval_quad(a)?),
    })
}
