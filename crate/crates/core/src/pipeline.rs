//! The reconstruction pipeline in its fixed stage order, with per-stage
//! timings, diagnostics and optional early stop.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::classify::{classification_sweep, SweepDiagnostics};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, UpAxis, VoxelGrid};
use crate::labels::LabeledVoxelGrid;
use crate::mesh_io::TriangleMesh;
use crate::model_io;
use crate::refine::{refine, RefineDiagnostics};
use crate::room_detect::{
    detect_ceiling_segments, detect_floors, finalize_rooms, presweep_reclassify, refine_ceilings, HoleSegment,
    PixelGrid2D, PixelState, ReconstructionConfig, RoomCandidate, RoomDiagnostics, RoomModel, SegmentSet,
};
use crate::voxelizer::{voxelize, VoxelizeRequest, DEFAULT_CELL_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Voxelize,
    Presweep,
    Ceilings,
    CeilingRefine,
    Floors,
    Finalize,
    Classify,
    Refine,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Voxelize,
        Stage::Presweep,
        Stage::Ceilings,
        Stage::CeilingRefine,
        Stage::Floors,
        Stage::Finalize,
        Stage::Classify,
        Stage::Refine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Voxelize => "voxelize",
            Stage::Presweep => "presweep",
            Stage::Ceilings => "ceilings",
            Stage::CeilingRefine => "ceiling-refine",
            Stage::Floors => "floors",
            Stage::Finalize => "finalize",
            Stage::Classify => "classify",
            Stage::Refine => "refine",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match s.as_str() {
            "sweep" => Some(Stage::Classify),
            "finalisation" | "finalization" => Some(Stage::Finalize),
            _ => None,
        };
        alias
            .or_else(|| Stage::ALL.into_iter().find(|st| st.name() == s))
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidArgument(format!("unknown stage `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub voxel_size: f64,
    pub padding: usize,
    pub up_axis: UpAxis,
    pub recon: ReconstructionConfig,
    /// Voxelize on exactly this grid (evaluation uses a shared grid).
    pub fixed_grid: Option<GridSpec>,
    pub cell_cap: u128,
    pub stop_after: Option<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            voxel_size: 0.05,
            padding: 2,
            up_axis: UpAxis::PLUS_Z,
            recon: ReconstructionConfig::default(),
            fixed_grid: None,
            cell_cap: DEFAULT_CELL_CAP,
            stop_after: None,
        }
    }
}

/// Counters collected over a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub non_empty_voxels: usize,
    pub ceiling_segments: usize,
    pub rooms: RoomDiagnostics,
    pub sweep: SweepDiagnostics,
    pub refine: RefineDiagnostics,
    /// Broken invariants found after room finalisation and classification.
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Stage outputs of a run; later stages are `None` after an early stop.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub voxels: VoxelGrid,
    pub presweep: Option<VoxelGrid>,
    pub segments: Option<SegmentSet>,
    pub ceilings: Option<Vec<(PixelGrid2D, Vec<HoleSegment>)>>,
    pub candidates: Option<Vec<RoomCandidate>>,
    pub rooms: Option<Vec<RoomModel>>,
    pub labeled: Option<LabeledVoxelGrid>,
    pub timings: Vec<StageTiming>,
    pub diagnostics: Diagnostics,
    /// Last stage that ran.
    pub completed: Stage,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        },
    })?;
    let elapsed: Duration = start.elapsed();
    log::info!("{stage}: {:.3} s", elapsed.as_secs_f64());
    timings.push(StageTiming {
        stage,
        seconds: elapsed.as_secs_f64(),
    });
    Ok(out)
}

/// Runs the pipeline on `mesh`, stopping after `cfg.stop_after` if set.
pub fn run(mesh: &TriangleMesh, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.recon.validate()?;
    let stop = cfg.stop_after.unwrap_or(Stage::Refine);
    let mut timings = Vec::new();
    let mut diag = Diagnostics::default();

    let req = VoxelizeRequest {
        voxel_size: cfg.voxel_size,
        padding: cfg.padding,
        up_axis: cfg.up_axis,
        cone: cfg.recon.cone(),
        fixed: cfg.fixed_grid,
        cell_cap: cfg.cell_cap,
    };
    let voxels = timed(&mut timings, Stage::Voxelize, || voxelize(mesh, &req))?;
    diag.non_empty_voxels = voxels.count_non_empty();
    let mut run = PipelineRun {
        voxels,
        presweep: None,
        segments: None,
        ceilings: None,
        candidates: None,
        rooms: None,
        labeled: None,
        timings: Vec::new(),
        diagnostics: Diagnostics::default(),
        completed: Stage::Voxelize,
    };
    let finish = |mut run: PipelineRun, timings, diag, stage| {
        run.timings = timings;
        run.diagnostics = diag;
        run.completed = stage;
        Ok(run)
    };
    if stop == Stage::Voxelize {
        return finish(run, timings, diag, Stage::Voxelize);
    }

    let pre = timed(&mut timings, Stage::Presweep, || Ok(presweep_reclassify(&run.voxels)))?;
    run.presweep = Some(pre);
    if stop == Stage::Presweep {
        return finish(run, timings, diag, Stage::Presweep);
    }
    let pre = run.presweep.as_ref().expect("set above");

    let segments = timed(&mut timings, Stage::Ceilings, || Ok(detect_ceiling_segments(pre, &cfg.recon)))?;
    diag.ceiling_segments = segments.segments.len();
    diag.rooms.discarded_segments = segments.discarded;
    run.segments = Some(segments);
    if stop == Stage::Ceilings {
        return finish(run, timings, diag, Stage::Ceilings);
    }
    let segments = run.segments.as_ref().expect("set above");

    let ceilings = timed(&mut timings, Stage::CeilingRefine, || refine_ceilings(pre, segments))?;
    if stop == Stage::CeilingRefine {
        run.ceilings = Some(ceilings);
        return finish(run, timings, diag, Stage::CeilingRefine);
    }

    let candidates = timed(&mut timings, Stage::Floors, || {
        Ok(detect_floors(pre, segments, ceilings, &cfg.recon, &mut diag.rooms))
    })?;
    if stop == Stage::Floors {
        run.candidates = Some(candidates);
        return finish(run, timings, diag, Stage::Floors);
    }

    let rooms = timed(&mut timings, Stage::Finalize, || {
        Ok(finalize_rooms(candidates, pre, &cfg.recon, &mut diag.rooms))
    })?;
    for r in &rooms {
        diag.violations.extend(r.violations());
    }
    run.rooms = Some(rooms);
    if stop == Stage::Finalize {
        return finish(run, timings, diag, Stage::Finalize);
    }
    let rooms = run.rooms.as_ref().expect("set above");

    // classification reads the original normal states: presweep only serves
    // room detection
    let (mut labeled, sweep) = timed(&mut timings, Stage::Classify, || classification_sweep(&run.voxels, rooms))?;
    diag.sweep = sweep;
    if stop == Stage::Classify {
        diag.violations.extend(labeled.violations());
        run.labeled = Some(labeled);
        return finish(run, timings, diag, Stage::Classify);
    }

    diag.refine = timed(&mut timings, Stage::Refine, || Ok(refine(&mut labeled, &run.voxels, &cfg.recon)))?;
    diag.violations.extend(labeled.violations());
    for v in &diag.violations {
        log::warn!("invariant: {v}");
    }
    run.labeled = Some(labeled);
    finish(run, timings, diag, Stage::Refine)
}

/// Debug dump of the last completed stage: `(file extension, contents)`.
/// Voxel stages use the `VOXGRID1` text format, room stages JSON and label
/// stages `VOXREC1`.
pub fn stage_dump(run: &PipelineRun) -> (&'static str, String) {
    let pixels = |g: &PixelGrid2D, state: PixelState| {
        (0..g.len())
            .filter(|&p| g.state[p] == state)
            .map(|p| {
                let [x, y] = g.column(p);
                [x as i64, y as i64, g.height[p] as i64]
            })
            .collect::<Vec<_>>()
    };
    match run.completed {
        Stage::Voxelize => ("voxgrid", model_io::grid_to_string(&run.voxels)),
        Stage::Presweep => (
            "voxgrid",
            model_io::grid_to_string(run.presweep.as_ref().expect("presweep ran")),
        ),
        Stage::Ceilings => {
            let segs = run.segments.as_ref().expect("ceilings ran");
            let list: Vec<_> = segs
                .segments
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "voxels": s.voxels.len(),
                        "columns": s.columns,
                        "coverage_m2": s.coverage,
                    })
                })
                .collect();
            let doc = serde_json::json!({ "segments": list, "discarded": segs.discarded });
            ("json", serde_json::to_string_pretty(&doc).expect("json"))
        }
        Stage::CeilingRefine => {
            let list: Vec<_> = run
                .ceilings
                .as_ref()
                .expect("ceiling refinement ran")
                .iter()
                .enumerate()
                .map(|(i, (c, holes))| {
                    serde_json::json!({
                        "segment": i,
                        "ceiling": pixels(c, PixelState::Ceiling),
                        "hole_pixels": pixels(c, PixelState::Hole),
                        "holes": holes.len(),
                    })
                })
                .collect();
            ("json", serde_json::to_string_pretty(&list).expect("json"))
        }
        Stage::Floors => {
            let list: Vec<_> = run
                .candidates
                .as_ref()
                .expect("floors ran")
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "segment": c.segment,
                        "ceiling": pixels(&c.ceiling, PixelState::Ceiling),
                        "floor": pixels(&c.floor, PixelState::Floor),
                    })
                })
                .collect();
            ("json", serde_json::to_string_pretty(&list).expect("json"))
        }
        Stage::Finalize => {
            let list: Vec<_> = run
                .rooms
                .as_ref()
                .expect("finalize ran")
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "id": r.id.0,
                        "segment": r.segment,
                        "ceiling": pixels(&r.ceiling, PixelState::Ceiling),
                        "floor": pixels(&r.floor, PixelState::Floor),
                        "wall_contour": r.wall_contour.iter().map(|c| [c.column[0], c.column[1], c.bottom, c.top]).collect::<Vec<_>>(),
                    })
                })
                .collect();
            ("json", serde_json::to_string_pretty(&list).expect("json"))
        }
        Stage::Classify | Stage::Refine => (
            "voxrec",
            model_io::model_to_string(run.labeled.as_ref().expect("labels exist")),
        ),
    }
}
