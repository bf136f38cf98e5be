//! `voxrec` command-line tool: reconstruct, evaluate and synthesize scenes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use voxrec::evaluate::{compare, map_rooms, shared_grid_spec, voxelize_ground_truth, EvalReport, NEGLIGIBLE_FRACTION};
use voxrec::mesh_io::{load_labeled_set, load_mesh, write_colored_voxel_mesh, write_labeled_set, write_obj, Palette};
use voxrec::model_io::{read_model, write_model};
use voxrec::pipeline::{self, Diagnostics, PipelineConfig, Stage, StageTiming};
use voxrec::room_detect::ReconstructionConfig;
use voxrec::synth::{generate, SceneSpec};
use voxrec::{par, LabeledVoxelGrid, TriangleMesh, UpAxis};

#[derive(Parser)]
#[command(name = "voxrec", version, about = "Voxel-based indoor reconstruction from triangle meshes")]
struct Cli {
    /// Worker threads (0 = all hardware threads).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a labeled voxel model from an OBJ or PLY mesh.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction with a ground-truth directory.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene and its ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ReconArgs {
    /// Edge length of a voxel in meters.
    #[arg(long, default_value_t = 0.05)]
    voxel_size: f64,
    /// Up direction of the input: +x, -x, +y, -y, +z or -z.
    #[arg(long, default_value = "+z")]
    up_axis: String,
    /// File of `key = value` lines overriding the reconstruction defaults.
    /// Flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_ceiling_area: Option<f64>,
    #[arg(long)]
    min_floor_area: Option<f64>,
    #[arg(long)]
    max_step_height: Option<f64>,
    #[arg(long)]
    hole_fill_ratio: Option<f64>,
    #[arg(long)]
    border_wall_ratio: Option<f64>,
    #[arg(long)]
    wall_search_out: Option<f64>,
    #[arg(long)]
    wall_search_in: Option<f64>,
    #[arg(long)]
    occlusion_search: Option<f64>,
    /// Half angle of the up/down normal cone in degrees.
    #[arg(long)]
    normal_cone_deg: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input mesh (.obj or .ply).
    input: PathBuf,
    /// Model file to write (defaults to the input path with a .voxrec extension).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the model as a colored PLY mesh.
    #[arg(long, value_name = "PLY")]
    export_ply: Option<PathBuf>,
    /// Stop after a stage and dump its state next to the output.
    #[arg(long, value_name = "STAGE")]
    stop_after: Option<String>,
    /// Write the run report (timings and diagnostics) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    recon: ReconArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file (.voxrec) or mesh (.obj/.ply) to reconstruct first.
    input: PathBuf,
    /// Ground-truth directory with one `room_<id>` folder per room.
    #[arg(long)]
    gt: PathBuf,
    /// Write the report here as well as to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    recon: ReconArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec (TOML file) or bundled preset name.
    spec: String,
    /// Seed for the vertex jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (receives input.obj, scene.toml and gt/).
    #[arg(short, long)]
    out: PathBuf,
}

/// Failure caused by the user's input rather than by the program (exit 2).
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<voxrec::Error>() {
            use voxrec::Error::*;
            return match e {
                Io { .. } | Parse { .. } | Scene { .. } | InvalidArgument(_) | GridTooLarge { .. } | GroundTruth(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(input_error(format!("input not found: {}", path.display())));
    }
    Ok(())
}

/// Reads a flat `key = value` file; `#` starts a comment.
fn read_config_file(path: &Path, cfg: &mut ReconstructionConfig) -> Result<()> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| input_error(format!("{}:{}: expected `key = value`", path.display(), n + 1)))?;
        cfg.set(key.trim(), value)
            .map_err(|e| input_error(format!("{}:{}: {e}", path.display(), n + 1)))?;
    }
    Ok(())
}

impl ReconArgs {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut recon = ReconstructionConfig::default();
        if let Some(path) = &self.config {
            read_config_file(path, &mut recon)?;
        }
        let flags = [
            ("min_ceiling_area", self.min_ceiling_area),
            ("min_floor_area", self.min_floor_area),
            ("max_step_height", self.max_step_height),
            ("hole_fill_ratio", self.hole_fill_ratio),
            ("border_wall_ratio", self.border_wall_ratio),
            ("wall_search_out", self.wall_search_out),
            ("wall_search_in", self.wall_search_in),
            ("occlusion_search", self.occlusion_search),
            ("normal_cone", self.normal_cone_deg),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                recon.set(key, &v.to_string())?;
            }
        }
        recon.validate()?;
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(input_error(format!("--voxel-size must be positive, got {}", self.voxel_size)));
        }
        let up_axis: UpAxis = self.up_axis.parse()?;
        Ok(PipelineConfig {
            voxel_size: self.voxel_size,
            up_axis,
            recon,
            ..PipelineConfig::default()
        })
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    input: &'a Path,
    output: &'a Path,
    completed_stage: Stage,
    grid_dims: [usize; 3],
    rooms: usize,
    timings: &'a [StageTiming],
    diagnostics: &'a Diagnostics,
}

fn load_input_mesh(path: &Path) -> Result<TriangleMesh> {
    require(path)?;
    let mesh = load_mesh(path)?;
    if mesh.degenerate_dropped > 0 {
        log::warn!("dropped {} degenerate triangles", mesh.degenerate_dropped);
    }
    Ok(mesh)
}

fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let mut cfg = args.recon.pipeline_config()?;
    cfg.stop_after = args.stop_after.as_deref().map(str::parse).transpose()?;
    let mesh = load_input_mesh(&args.input)?;
    let output = args.output.clone().unwrap_or_else(|| args.input.with_extension("voxrec"));
    let run = pipeline::run(&mesh, &cfg)?;

    let written = if run.completed == Stage::Refine {
        let model = run.labeled.as_ref().context("pipeline finished without a model")?;
        write_model(model, &output)?;
        if let Some(ply) = &args.export_ply {
            write_colored_voxel_mesh(model, ply, &Palette::default())?;
        }
        output.clone()
    } else {
        let (ext, text) = pipeline::stage_dump(&run);
        let path = output.with_extension(format!("{}.{ext}", run.completed));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        if args.export_ply.is_some() {
            log::warn!("--export-ply ignored: the run stopped after {}", run.completed);
        }
        path
    };

    let report = RunReport {
        input: &args.input,
        output: &written,
        completed_stage: run.completed,
        grid_dims: run.voxels.spec.dims,
        rooms: run.rooms.as_ref().map_or(0, Vec::len),
        timings: &run.timings,
        diagnostics: &run.diagnostics,
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.report {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn is_mesh(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("obj") || e.eq_ignore_ascii_case("ply"))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    require(&args.input)?;
    if !args.gt.is_dir() {
        return Err(input_error(format!("input not found: ground-truth directory {}", args.gt.display())));
    }
    let set = load_labeled_set(&args.gt)?;
    let (rc, vertices): (LabeledVoxelGrid, usize) = if is_mesh(&args.input) {
        let mut cfg = args.recon.pipeline_config()?;
        let mesh = load_input_mesh(&args.input)?;
        let grid = shared_grid_spec(&mesh, &set, cfg.voxel_size, cfg.padding, cfg.up_axis, cfg.cell_cap)?;
        cfg.fixed_grid = Some(grid);
        let run = pipeline::run(&mesh, &cfg)?;
        (run.labeled.context("pipeline finished without a model")?, mesh.vertices.len())
    } else {
        (read_model(&args.input)?, 0)
    };
    let gt = voxelize_ground_truth(&set, &rc.spec)?;
    let mapping = map_rooms(&gt, &rc, NEGLIGIBLE_FRACTION)?;
    let report = EvalReport {
        mesh_vertices: vertices,
        ..compare(&gt, &rc, &mapping)?
    };
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.output {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn load_scene_spec(arg: &str) -> Result<SceneSpec> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        return SceneSpec::from_toml(&text).with_context(|| format!("scene spec {arg}"));
    }
    SceneSpec::preset(arg).map_err(|_| input_error(format!("input not found: {arg} is neither a file nor a preset")))
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = load_scene_spec(&args.spec)?;
    let scene = generate(&spec, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let gt_dir = args.out.join("gt");
    if gt_dir.exists() {
        fs::remove_dir_all(&gt_dir).with_context(|| format!("clearing {}", gt_dir.display()))?;
    }
    write_obj(&scene.mesh, args.out.join("input.obj"))?;
    write_labeled_set(&scene.ground_truth, &gt_dir)?;
    fs::write(args.out.join("scene.toml"), spec.to_toml())?;
    log::info!(
        "wrote {} triangles and {} ground-truth rooms to {}",
        scene.mesh.triangles.len(),
        scene.ground_truth.rooms.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = par::with_threads(cli.threads, || match &cli.command {
        Command::Reconstruct(a) => reconstruct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
