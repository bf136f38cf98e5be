//! Voxel-based reconstruction of indoor rooms from unstructured triangle meshes.
//!
//! The pipeline voxelizes a mesh into a grid of per-voxel normal states,
//! detects rooms from their ceilings, finds floors, assigns every voxel
//! between ceiling and floor a room and a semantic class, and finally
//! refines walls and wall openings. An evaluation module compares a
//! reconstruction against labeled ground-truth meshes voxel by voxel, and a
//! scene synthesizer produces test meshes with exact labels.
//!
//! ```no_run
//! use voxrec::{mesh_io, pipeline::{self, PipelineConfig}};
//!
//! let mesh = mesh_io::load_mesh("scan.obj").unwrap();
//! let run = pipeline::run(&mesh, &PipelineConfig::default()).unwrap();
//! voxrec::model_io::write_model(run.labeled.as_ref().unwrap(), "scan.voxrec").unwrap();
//! ```

pub mod classify;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod labels;
pub mod mesh_io;
pub mod model_io;
pub mod par;
pub mod pipeline;
pub mod refine;
pub mod room_detect;
pub mod synth;
pub mod voxelizer;

pub use error::{Error, Result};
pub use grid::{GridSpec, NormalState, UpAxis, VoxelGrid};
pub use labels::{ClassSet, DirSet, LabeledVoxelGrid, RoomId, SemanticClass};
pub use mesh_io::TriangleMesh;
