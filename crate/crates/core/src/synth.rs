//! Synthetic indoor scenes with exact ground truth.
//!
//! A [`SceneSpec`] describes box-shaped rooms (inner surfaces only), wall
//! openings, clutter boxes and occlusion patches. [`generate`] tessellates
//! it into an input mesh plus per-room ground-truth meshes, and
//! [`analytic_label_oracle`] computes the expected voxel labels of the
//! ground truth directly from box arithmetic.
//!
//! Coordinates: +z is up. A room's local frame has its origin at the
//! room's `origin` corner on its floor, x along `width` and y along `depth`.
//! Rooms rotate by their own `yaw_deg` about that corner, then the whole
//! scene rotates by the top-level `yaw_deg` about the world origin.
//!
//! Opening and patch extents are given in face coordinates `u`, `v`:
//! on `x_min`/`x_max` walls u runs along y, on `y_min`/`y_max` walls along x,
//! and v is the height above the floor. On `floor`/`ceiling`, u is x and v
//! is y.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::normalize_gt_classes;
use crate::grid::{add, cross, dot, scale, GridSpec, UpAxis, Vec3};
use crate::labels::{ClassSet, LabeledVoxelGrid, RoomId, SemanticClass};
use crate::mesh_io::{LabeledMeshSet, TriangleMesh};

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Floor,
    Ceiling,
    XMin,
    XMax,
    YMin,
    YMax,
}

impl Surface {
    pub const WALLS: [Surface; 4] = [Surface::XMin, Surface::XMax, Surface::YMin, Surface::YMax];

    pub fn is_wall(self) -> bool {
        !matches!(self, Surface::Floor | Surface::Ceiling)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Local-frame origin in world x, y.
    pub origin: [f64; 2],
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    #[serde(default)]
    pub floor_elevation: f64,
    #[serde(default)]
    pub yaw_deg: f64,
}

/// Rectangular cutout of a wall face; the ground truth gets a WallOpening
/// plane in its place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningSpec {
    pub room: usize,
    pub face: Surface,
    pub u: [f64; 2],
    pub v: [f64; 2],
}

/// Furniture box, placed in room-local coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSpec {
    pub room: usize,
    pub min: [f64; 2],
    pub size: [f64; 3],
    /// Height of the box bottom above the floor.
    #[serde(default)]
    pub elevation: f64,
    /// Allows the box to touch walls; otherwise it must keep
    /// [`CLUTTER_CLEARANCE`] from every wall.
    #[serde(default)]
    pub attached: bool,
}

/// Region removed from the input mesh only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub room: usize,
    pub surface: Surface,
    pub u: [f64; 2],
    pub v: [f64; 2],
}

/// Minimum distance between non-attached clutter and walls.
pub const CLUTTER_CLEARANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Voxel size the scene is meant for; bounds the jitter.
    pub voxel_size: f64,
    /// Minimum horizontal gap between rooms whose height ranges overlap.
    pub wall_thickness: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Target triangle edge length.
    pub edge_length: f64,
    #[serde(default)]
    pub yaw_deg: f64,
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub openings: Vec<OpeningSpec>,
    #[serde(default)]
    pub clutter: Vec<ClutterSpec>,
    #[serde(default)]
    pub occlusion_patches: Vec<PatchSpec>,
}

/// Bundled example scenes.
pub const PRESETS: [(&str, &str); 2] = [
    ("single_room", include_str!("../scenes/single_room.toml")),
    ("office_small", include_str!("../scenes/office_small.toml")),
];

fn finite_pos(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::scene(field, format!("must be positive, got {v}")))
    }
}

fn check_range(field: &str, r: [f64; 2], max: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
        return Err(Error::scene(field, format!("empty or invalid range {r:?}")));
    }
    if r[0] < -EPS || r[1] > max + EPS {
        return Err(Error::scene(field, format!("range {r:?} leaves the face extent [0, {max}]")));
    }
    Ok(())
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<SceneSpec> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[s].lines().next().unwrap_or("").trim().to_string())
                .unwrap_or_default();
            Error::scene(field, e.message().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn preset(name: &str) -> Result<SceneSpec> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`")))?;
        SceneSpec::from_toml(text)
    }

    fn room(&self, field: &str, i: usize) -> Result<&RoomSpec> {
        self.rooms
            .get(i)
            .ok_or_else(|| Error::scene(field, format!("room index {i} out of range")))
    }

    /// Extent (u, v) of a room surface.
    fn face_extent(room: &RoomSpec, s: Surface) -> (f64, f64) {
        match s {
            Surface::Floor | Surface::Ceiling => (room.width, room.depth),
            Surface::XMin | Surface::XMax => (room.depth, room.height),
            Surface::YMin | Surface::YMax => (room.width, room.height),
        }
    }

    pub fn validate(&self) -> Result<()> {
        finite_pos("voxel_size", self.voxel_size)?;
        finite_pos("wall_thickness", self.wall_thickness)?;
        finite_pos("edge_length", self.edge_length)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma < self.voxel_size / 2.0) {
            return Err(Error::scene(
                "noise_sigma",
                format!("must be in [0, voxel_size/2), got {}", self.noise_sigma),
            ));
        }
        if !self.yaw_deg.is_finite() {
            return Err(Error::scene("yaw_deg", "must be finite"));
        }
        if self.rooms.is_empty() {
            return Err(Error::scene("rooms", "at least one room is required"));
        }
        for (i, r) in self.rooms.iter().enumerate() {
            finite_pos(&format!("rooms[{i}].width"), r.width)?;
            finite_pos(&format!("rooms[{i}].depth"), r.depth)?;
            finite_pos(&format!("rooms[{i}].height"), r.height)?;
            if !(r.floor_elevation.is_finite() && r.yaw_deg.is_finite() && r.origin.iter().all(|v| v.is_finite())) {
                return Err(Error::scene(format!("rooms[{i}]"), "non-finite placement"));
            }
        }
        for i in 0..self.rooms.len() {
            for j in i + 1..self.rooms.len() {
                let (a, b) = (&self.rooms[i], &self.rooms[j]);
                let overlap_z = a.floor_elevation < b.floor_elevation + b.height - EPS
                    && b.floor_elevation < a.floor_elevation + a.height - EPS;
                if !overlap_z {
                    continue;
                }
                let gap = footprint_gap(&footprint(a), &footprint(b));
                if gap < self.wall_thickness - 1e-6 {
                    return Err(Error::scene(
                        format!("rooms[{j}]"),
                        format!("closer than wall_thickness to rooms[{i}] (gap {gap:.3} m)"),
                    ));
                }
            }
        }
        for (k, o) in self.openings.iter().enumerate() {
            let f = format!("openings[{k}]");
            let room = self.room(&format!("{f}.room"), o.room)?;
            if !o.face.is_wall() {
                return Err(Error::scene(format!("{f}.face"), "openings must be on a wall face"));
            }
            let (eu, ev) = Self::face_extent(room, o.face);
            check_range(&format!("{f}.u"), o.u, eu)?;
            check_range(&format!("{f}.v"), o.v, ev)?;
        }
        for (k, p) in self.occlusion_patches.iter().enumerate() {
            let f = format!("occlusion_patches[{k}]");
            let room = self.room(&format!("{f}.room"), p.room)?;
            let (eu, ev) = Self::face_extent(room, p.surface);
            check_range(&format!("{f}.u"), p.u, eu)?;
            check_range(&format!("{f}.v"), p.v, ev)?;
        }
        for (k, c) in self.clutter.iter().enumerate() {
            let f = format!("clutter[{k}]");
            let room = self.room(&format!("{f}.room"), c.room)?;
            for (a, &s) in c.size.iter().enumerate() {
                finite_pos(&format!("{f}.size[{a}]"), s)?;
            }
            let margin = if c.attached { 0.0 } else { CLUTTER_CLEARANCE };
            let fits = c.min[0] >= margin - EPS
                && c.min[1] >= margin - EPS
                && c.min[0] + c.size[0] <= room.width - margin + EPS
                && c.min[1] + c.size[1] <= room.depth - margin + EPS;
            if !fits {
                return Err(Error::scene(
                    format!("{f}.min"),
                    format!("box must stay {margin} m inside the room walls"),
                ));
            }
            if !(c.elevation >= 0.0 && c.elevation + c.size[2] <= room.height + EPS) {
                return Err(Error::scene(format!("{f}.elevation"), "box must fit between floor and ceiling"));
            }
        }
        Ok(())
    }

    /// True when no rotation is applied anywhere.
    pub fn is_axis_aligned(&self) -> bool {
        self.yaw_deg == 0.0 && self.rooms.iter().all(|r| r.yaw_deg == 0.0)
    }
}

/// Room footprint corners in world x, y (before the scene yaw; the scene
/// yaw does not change relative distances).
fn footprint(r: &RoomSpec) -> [[f64; 2]; 4] {
    let (s, c) = r.yaw_deg.to_radians().sin_cos();
    let rot = |x: f64, y: f64| [r.origin[0] + c * x - s * y, r.origin[1] + s * x + c * y];
    [rot(0.0, 0.0), rot(r.width, 0.0), rot(r.width, r.depth), rot(0.0, r.depth)]
}

/// Largest separation between two convex quads along any of their edge
/// normals; negative when they overlap.
fn footprint_gap(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for poly in [a, b] {
        for i in 0..4 {
            let p = poly[i];
            let q = poly[(i + 1) % 4];
            let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
            let len = (ex * ex + ey * ey).sqrt();
            let n = [-ey / len, ex / len];
            let proj = |pts: &[[f64; 2]; 4]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p[0] * n[0] + p[1] * n[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            best = best.max(blo - ahi).max(alo - bhi);
        }
    }
    best
}

/// Planar rectangle in room-local coordinates: `corner + s·u + t·v` for
/// `s ∈ [0, size_u]`, `t ∈ [0, size_v]`.
#[derive(Clone, Copy, Debug)]
struct Face {
    corner: Vec3,
    u: Vec3,
    v: Vec3,
    size: [f64; 2],
    /// Desired front-face normal.
    normal: Vec3,
}

impl Face {
    fn point(&self, s: f64, t: f64) -> Vec3 {
        add(self.corner, add(scale(self.u, s), scale(self.v, t)))
    }
}

fn room_face(r: &RoomSpec, s: Surface) -> Face {
    let (w, d, h) = (r.width, r.depth, r.height);
    let (x, y, z) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    let (corner, u, v, size, normal) = match s {
        Surface::Floor => ([0.0; 3], x, y, [w, d], z),
        Surface::Ceiling => ([0.0, 0.0, h], x, y, [w, d], [0.0, 0.0, -1.0]),
        Surface::XMin => ([0.0; 3], y, z, [d, h], x),
        Surface::XMax => ([w, 0.0, 0.0], y, z, [d, h], [-1.0, 0.0, 0.0]),
        Surface::YMin => ([0.0; 3], x, z, [w, h], y),
        Surface::YMax => ([0.0, d, 0.0], x, z, [w, h], [0.0, -1.0, 0.0]),
    };
    Face {
        corner,
        u,
        v,
        size,
        normal,
    }
}

/// The six outward faces of a clutter box, minus those lying on a room
/// surface.
fn clutter_faces(r: &RoomSpec, c: &ClutterSpec) -> Vec<Face> {
    let lo = [c.min[0], c.min[1], c.elevation];
    let hi = [c.min[0] + c.size[0], c.min[1] + c.size[1], c.elevation + c.size[2]];
    let room_hi = [r.width, r.depth, r.height];
    let unit = |a: usize| {
        let mut e = [0.0; 3];
        e[a] = 1.0;
        e
    };
    let mut out = Vec::new();
    for a in 0..3 {
        let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
        for (high, coord) in [(false, lo[a]), (true, hi[a])] {
            let on_boundary = if high {
                (coord - room_hi[a]).abs() < EPS
            } else {
                coord.abs() < EPS
            };
            if on_boundary {
                continue;
            }
            let mut corner = lo;
            corner[a] = coord;
            out.push(Face {
                corner,
                u: unit(b),
                v: unit(cc),
                size: [hi[b] - lo[b], hi[cc] - lo[cc]],
                normal: scale(unit(a), if high { 1.0 } else { -1.0 }),
            });
        }
    }
    out
}

/// Breakpoint cells of a face with the rectangles `cuts` removed. A cell is
/// removed when its center lies strictly inside a cut.
fn face_cells(face: &Face, cuts: &[([f64; 2], [f64; 2])]) -> Vec<([f64; 2], [f64; 2])> {
    let mut us = vec![0.0, face.size[0]];
    let mut vs = vec![0.0, face.size[1]];
    for (u, v) in cuts {
        us.extend(u.iter().map(|x| x.clamp(0.0, face.size[0])));
        vs.extend(v.iter().map(|x| x.clamp(0.0, face.size[1])));
    }
    for list in [&mut us, &mut vs] {
        list.sort_by(f64::total_cmp);
        list.dedup_by(|a, b| (*a - *b).abs() < EPS);
    }
    let mut cells = Vec::new();
    for vw in vs.windows(2) {
        for uw in us.windows(2) {
            let (cu, cv) = ((uw[0] + uw[1]) / 2.0, (vw[0] + vw[1]) / 2.0);
            let cut = cuts
                .iter()
                .any(|(u, v)| cu > u[0] && cu < u[1] && cv > v[0] && cv < v[1]);
            if !cut {
                cells.push(([uw[0], uw[1]], [vw[0], vw[1]]));
            }
        }
    }
    cells
}

/// Collects triangles with shared vertices (deduplicated by position).
#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Vec3>,
    index: HashMap<[i64; 3], u32>,
    faces: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn vertex(&mut self, p: Vec3) -> u32 {
        let key = p.map(|c| (c * 1e8).round() as i64);
        let next = self.vertices.len() as u32;
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            next
        })
    }

    /// Tessellates one cell of `face` into quads no longer than `edge`,
    /// mapping local points through `xf`.
    fn cell(&mut self, face: &Face, cell: ([f64; 2], [f64; 2]), edge: f64, xf: &impl Fn(Vec3) -> Vec3) {
        let (u, v) = cell;
        let nu = (((u[1] - u[0]) / edge) - 1e-9).ceil().max(1.0) as usize;
        let nv = (((v[1] - v[0]) / edge) - 1e-9).ceil().max(1.0) as usize;
        let su = |i: usize| if i == nu { u[1] } else { u[0] + (u[1] - u[0]) * i as f64 / nu as f64 };
        let sv = |j: usize| if j == nv { v[1] } else { v[0] + (v[1] - v[0]) * j as f64 / nv as f64 };
        let flip = dot(cross(face.u, face.v), face.normal) < 0.0;
        let mut ids = vec![0u32; (nu + 1) * (nv + 1)];
        for j in 0..=nv {
            for i in 0..=nu {
                ids[j * (nu + 1) + i] = self.vertex(xf(face.point(su(i), sv(j))));
            }
        }
        for j in 0..nv {
            for i in 0..nu {
                let a = ids[j * (nu + 1) + i];
                let b = ids[j * (nu + 1) + i + 1];
                let c = ids[(j + 1) * (nu + 1) + i + 1];
                let d = ids[(j + 1) * (nu + 1) + i];
                if flip {
                    self.faces.push([a, c, b]);
                    self.faces.push([a, d, c]);
                } else {
                    self.faces.push([a, b, c]);
                    self.faces.push([a, c, d]);
                }
            }
        }
    }

    fn finish(self) -> Result<TriangleMesh> {
        TriangleMesh::from_indexed(self.vertices, self.faces)
    }
}

/// Input mesh and ground truth of a generated scene.
#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: TriangleMesh,
    pub ground_truth: LabeledMeshSet,
}

fn transform(spec: &SceneSpec, room: &RoomSpec) -> impl Fn(Vec3) -> Vec3 {
    let (rs, rc) = room.yaw_deg.to_radians().sin_cos();
    let (gs, gc) = spec.yaw_deg.to_radians().sin_cos();
    let (ox, oy, oz) = (room.origin[0], room.origin[1], room.floor_elevation);
    move |p: Vec3| {
        let x = ox + rc * p[0] - rs * p[1];
        let y = oy + rs * p[0] + rc * p[1];
        [gc * x - gs * y, gs * x + gc * y, oz + p[2]]
    }
}

fn cuts_for<'a>(
    items: impl Iterator<Item = (usize, Surface, [f64; 2], [f64; 2])> + 'a,
    room: usize,
    surface: Surface,
) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + 'a {
    items
        .filter(move |&(r, s, _, _)| r == room && s == surface)
        .map(|(_, _, u, v)| (u, v))
}

/// Builds the scene. The input mesh jitter is drawn from a ChaCha stream
/// seeded with `seed`, so equal arguments give identical meshes.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    use SemanticClass::*;
    spec.validate()?;
    let openings = || spec.openings.iter().map(|o| (o.room, o.face, o.u, o.v));
    let patches = || spec.occlusion_patches.iter().map(|p| (p.room, p.surface, p.u, p.v));
    let mut input = MeshBuilder::default();
    let mut gt = LabeledMeshSet::default();
    let all = [
        Surface::Floor,
        Surface::Ceiling,
        Surface::XMin,
        Surface::XMax,
        Surface::YMin,
        Surface::YMax,
    ];
    for (ri, room) in spec.rooms.iter().enumerate() {
        let xf = transform(spec, room);
        let mut classes: BTreeMap<SemanticClass, MeshBuilder> = BTreeMap::new();
        for s in all {
            let face = room_face(room, s);
            let open: Vec<_> = cuts_for(openings(), ri, s).collect();
            let mut hidden = open.clone();
            hidden.extend(cuts_for(patches(), ri, s));
            for cell in face_cells(&face, &hidden) {
                input.cell(&face, cell, spec.edge_length, &xf);
            }
            let class = match s {
                Surface::Floor => Floor,
                Surface::Ceiling => Ceiling,
                _ => Wall,
            };
            let target = classes.entry(class).or_default();
            for cell in face_cells(&face, &open) {
                target.cell(&face, cell, spec.edge_length, &xf);
            }
            for &(u, v) in &open {
                classes
                    .entry(WallOpening)
                    .or_default()
                    .cell(&face, (u, v), spec.edge_length, &xf);
            }
        }
        for c in spec.clutter.iter().filter(|c| c.room == ri) {
            for face in clutter_faces(room, c) {
                input.cell(&face, ([0.0, face.size[0]], [0.0, face.size[1]]), spec.edge_length, &xf);
            }
        }
        let mut meshes = BTreeMap::new();
        for (class, b) in classes {
            meshes.insert(class, b.finish()?);
        }
        gt.rooms.insert(ri as u32 + 1, meshes);
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::scene("noise_sigma", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut input.vertices {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    Ok(Scene {
        mesh: input.finish()?,
        ground_truth: gt,
    })
}

/// Closed-touch voxel index range of `[lo, hi]` along axis `a`, clipped to
/// the grid; `None` when it misses the grid.
fn touch_range(grid: &GridSpec, a: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let o = grid.origin[a];
    let vs = grid.voxel_size;
    let i0 = ((lo - o) / vs - 1.0 - 1e-7).ceil().max(0.0);
    let i1 = ((hi - o) / vs + 1e-7).floor().min(grid.dims[a] as f64 - 1.0);
    (i0 <= i1).then_some((i0 as usize, i1 as usize))
}

/// Expected ground-truth voxel labels from box arithmetic alone.
///
/// Every ground-truth rectangle marks the voxels whose closed cells touch
/// it; the class merge rules are those of the ground-truth voxelization.
/// Only axis-aligned scenes on a +z grid are supported.
pub fn analytic_label_oracle(spec: &SceneSpec, grid: &GridSpec) -> Result<LabeledVoxelGrid> {
    use SemanticClass::*;
    spec.validate()?;
    if !spec.is_axis_aligned() {
        return Err(Error::InvalidArgument("oracle supports axis-aligned only".into()));
    }
    if grid.up_axis != UpAxis::PLUS_Z {
        return Err(Error::InvalidArgument("oracle needs a +z grid".into()));
    }
    let mut bits: BTreeMap<(usize, u32), u8> = BTreeMap::new();
    let mut mark = |room: u32, class: SemanticClass, lo: Vec3, hi: Vec3| {
        let ranges: Option<Vec<(usize, usize)>> = (0..3).map(|a| touch_range(grid, a, lo[a], hi[a])).collect();
        let Some(r) = ranges else { return };
        for k in r[2].0..=r[2].1 {
            for j in r[1].0..=r[1].1 {
                for i in r[0].0..=r[0].1 {
                    *bits.entry((grid.linear([i, j, k]), room)).or_default() |= class.bit();
                }
            }
        }
    };
    for (ri, room) in spec.rooms.iter().enumerate() {
        let id = ri as u32 + 1;
        let base = [room.origin[0], room.origin[1], room.floor_elevation];
        let world = |p: Vec3| add(base, p);
        for s in [
            Surface::Floor,
            Surface::Ceiling,
            Surface::XMin,
            Surface::XMax,
            Surface::YMin,
            Surface::YMax,
        ] {
            let face = room_face(room, s);
            let class = match s {
                Surface::Floor => Floor,
                Surface::Ceiling => Ceiling,
                _ => Wall,
            };
            let open: Vec<_> = spec
                .openings
                .iter()
                .filter(|o| o.room == ri && o.face == s)
                .map(|o| (o.u, o.v))
                .collect();
            let mut rects: Vec<(SemanticClass, ([f64; 2], [f64; 2]))> =
                face_cells(&face, &open).into_iter().map(|c| (class, c)).collect();
            rects.extend(open.iter().map(|&c| (WallOpening, c)));
            for (class, (u, v)) in rects {
                let a = world(face.point(u[0], v[0]));
                let b = world(face.point(u[1], v[1]));
                let lo = std::array::from_fn(|i| a[i].min(b[i]));
                let hi = std::array::from_fn(|i| a[i].max(b[i]));
                mark(id, class, lo, hi);
            }
        }
    }
    let mut out = LabeledVoxelGrid::new(*grid);
    for ((v, room), b) in bits {
        out.add(v, RoomId(room), normalize_gt_classes(ClassSet(b)));
    }
    Ok(out)
}

/// Knobs for [`random_scene`].
#[derive(Clone, Debug)]
pub struct RandomSceneParams {
    pub voxel_size: f64,
    pub max_rooms: usize,
    pub clutter: bool,
    pub occlusion: bool,
    pub noise: bool,
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        RandomSceneParams {
            voxel_size: 0.1,
            max_rooms: 3,
            clutter: true,
            occlusion: false,
            noise: false,
        }
    }
}

/// Random valid scene: rooms in a row along x separated by walls, a door
/// between neighbours, optional floor-standing clutter, wall occlusion
/// patches and jitter. All lengths are multiples of the voxel size.
pub fn random_scene<R: Rng>(rng: &mut R, params: &RandomSceneParams) -> SceneSpec {
    let vs = params.voxel_size;
    let snap = |x: f64| (x / vs).round() * vs;
    let pick = |rng: &mut R, lo: f64, hi: f64| snap(rng.random_range(lo..=hi));
    let thickness = snap(0.2).max(vs);
    let n = rng.random_range(1..=params.max_rooms.max(1));
    let mut rooms = Vec::new();
    let mut x = 0.0;
    for _ in 0..n {
        let width = pick(rng, 2.5, 5.0);
        rooms.push(RoomSpec {
            origin: [snap(x), 0.0],
            width,
            depth: pick(rng, 2.5, 5.0),
            height: pick(rng, 2.4, 3.0),
            floor_elevation: 0.0,
            yaw_deg: 0.0,
        });
        x += width + thickness;
    }
    let mut openings = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let depth = rooms[i].depth.min(rooms[i + 1].depth);
        let w = pick(rng, 0.8, 1.0);
        let u0 = pick(rng, 0.4, depth - w - 0.4);
        let v = [0.0, snap(2.0)];
        openings.push(OpeningSpec {
            room: i,
            face: Surface::XMax,
            u: [u0, u0 + w],
            v,
        });
        openings.push(OpeningSpec {
            room: i + 1,
            face: Surface::XMin,
            u: [u0, u0 + w],
            v,
        });
    }
    let mut clutter = Vec::new();
    if params.clutter {
        for (ri, r) in rooms.iter().enumerate() {
            for _ in 0..rng.random_range(0..=2) {
                let sx = pick(rng, 0.4, 1.0);
                let sy = pick(rng, 0.4, 1.0);
                let m = snap(CLUTTER_CLEARANCE + vs);
                if r.width - sx - 2.0 * m < 0.0 || r.depth - sy - 2.0 * m < 0.0 {
                    continue;
                }
                clutter.push(ClutterSpec {
                    room: ri,
                    min: [pick(rng, m, r.width - sx - m), pick(rng, m, r.depth - sy - m)],
                    size: [sx, sy, pick(rng, 0.4, 1.2)],
                    elevation: 0.0,
                    attached: false,
                });
            }
        }
    }
    let mut occlusion_patches = Vec::new();
    if params.occlusion {
        for (ri, r) in rooms.iter().enumerate() {
            if rng.random_bool(0.5) {
                let u0 = pick(rng, 0.2, r.width - 0.8);
                occlusion_patches.push(PatchSpec {
                    room: ri,
                    surface: Surface::YMax,
                    u: [u0, u0 + snap(0.5)],
                    v: [snap(1.0), snap(1.5)],
                });
            }
        }
    }
    SceneSpec {
        voxel_size: vs,
        wall_thickness: thickness,
        noise_sigma: if params.noise { vs * 0.1 } else { 0.0 },
        edge_length: 0.5,
        yaw_deg: 0.0,
        rooms,
        openings,
        clutter,
        occlusion_patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::voxelize_ground_truth;
    use crate::voxelizer::fit_grid;

    fn single() -> SceneSpec {
        SceneSpec::preset("single_room").unwrap()
    }

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            SceneSpec::preset(name).unwrap();
        }
        assert_eq!(SceneSpec::preset("office_small").unwrap().rooms.len(), 3);
        assert!(SceneSpec::preset("nope").is_err());
    }

    #[test]
    fn single_room_geometry() {
        let scene = generate(&single(), 1).unwrap();
        assert_eq!(scene.ground_truth.rooms.len(), 1);
        assert_eq!(scene.ground_truth.rooms[&1].len(), 3);
        let (lo, hi) = scene.mesh.bounds().unwrap();
        assert_eq!(lo, [0.0, 0.0, 0.0]);
        assert_eq!(hi, [4.0, 5.0, 2.5]);
        // every normal points into the room
        let c = [2.0, 2.5, 1.25];
        for t in 0..scene.mesh.triangles.len() {
            let p = scene.mesh.triangle(t)[0];
            let to_center = crate::grid::sub(c, p);
            assert!(dot(to_center, scene.mesh.face_normals[t]) > 0.0);
        }
    }

    #[test]
    fn patch_only_touches_input() {
        let mut spec = single();
        let base = generate(&spec, 0).unwrap();
        spec.occlusion_patches.push(PatchSpec {
            room: 0,
            surface: Surface::XMin,
            u: [1.0, 2.0],
            v: [0.5, 1.5],
        });
        let patched = generate(&spec, 0).unwrap();
        assert_eq!(patched.ground_truth, base.ground_truth);
        let inside = |m: &TriangleMesh| {
            (0..m.triangles.len())
                .filter(|&t| {
                    let tri = m.triangle(t);
                    let c = scale(add(add(tri[0], tri[1]), tri[2]), 1.0 / 3.0);
                    c[0] == 0.0 && c[1] > 1.0 && c[1] < 2.0 && c[2] > 0.5 && c[2] < 1.5
                })
                .count()
        };
        assert!(inside(&base.mesh) > 0);
        assert_eq!(inside(&patched.mesh), 0);
    }

    #[test]
    fn validation_names_fields() {
        let mut spec = single();
        spec.openings.push(OpeningSpec {
            room: 0,
            face: Surface::XMax,
            u: [4.5, 5.5],
            v: [0.0, 2.0],
        });
        match spec.validate() {
            Err(Error::Scene { field, .. }) => assert_eq!(field, "openings[0].u"),
            other => panic!("{other:?}"),
        }
        let mut spec = single();
        spec.noise_sigma = 0.03;
        assert!(spec.validate().is_err());
        let mut spec = single();
        spec.rooms.push(RoomSpec {
            origin: [4.1, 0.0],
            width: 2.0,
            depth: 2.0,
            height: 2.5,
            floor_elevation: 0.0,
            yaw_deg: 0.0,
        });
        assert!(spec.validate().is_err());
        // stacked rooms may touch
        spec.rooms[1].origin = [0.0, 0.0];
        spec.rooms[1].floor_elevation = 2.5;
        spec.validate().unwrap();
        let err = SceneSpec::from_toml("voxel_size = 0.05\nwall_thickness = 0.2\nedge_length = -1\nrooms = []\n");
        assert!(err.is_err());
    }

    #[test]
    fn deterministic_with_noise() {
        let mut spec = SceneSpec::preset("office_small").unwrap();
        spec.noise_sigma = 0.01;
        let a = generate(&spec, 7).unwrap();
        let b = generate(&spec, 7).unwrap();
        let c = generate(&spec, 8).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_ne!(a.mesh, c.mesh);
    }

    #[test]
    fn oracle_plate_and_ring() {
        let spec = single();
        let scene = generate(&spec, 0).unwrap();
        let (lo, hi) = scene.mesh.bounds().unwrap();
        let grid = fit_grid(lo, hi, 0.05, 2, UpAxis::PLUS_Z, 1 << 31).unwrap();
        let oracle = analytic_label_oracle(&spec, &grid).unwrap();
        let r = RoomId(1);
        let ceiling: Vec<usize> = (0..oracle.len())
            .filter(|&v| oracle.classes(v, r).contains(SemanticClass::Ceiling))
            .collect();
        // 4 m / 0.05 m = 80 intervals, 81 voxel centers on the surface
        assert_eq!(ceiling.len(), 81 * 101);
        assert_eq!(oracle.violations(), Vec::<String>::new());
        assert_eq!(voxelize_ground_truth(&scene.ground_truth, &grid).unwrap(), oracle);
    }

    #[test]
    fn oracle_matches_voxelized_ground_truth_for_office() {
        let spec = SceneSpec::preset("office_small").unwrap();
        let scene = generate(&spec, 0).unwrap();
        let (lo, hi) = scene.mesh.bounds().unwrap();
        let grid = fit_grid(lo, hi, 0.05, 2, UpAxis::PLUS_Z, 1 << 31).unwrap();
        let oracle = analytic_label_oracle(&spec, &grid).unwrap();
        assert_eq!(voxelize_ground_truth(&scene.ground_truth, &grid).unwrap(), oracle);
        let door = oracle
            .room_ids()
            .iter()
            .map(|&r| (0..oracle.len()).filter(|&v| oracle.classes(v, r) == ClassSet::single(SemanticClass::WallOpening)).count())
            .sum::<usize>();
        assert!(door > 0);
    }

    #[test]
    fn rotated_scene_is_rejected_by_oracle() {
        let mut spec = single();
        spec.yaw_deg = 30.0;
        let grid = GridSpec::new([0.0; 3], 0.05, [10, 10, 10], UpAxis::PLUS_Z).unwrap();
        assert!(analytic_label_oracle(&spec, &grid).is_err());
        generate(&spec, 0).unwrap();
    }

    #[test]
    fn random_scenes_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = RandomSceneParams {
            occlusion: true,
            noise: true,
            ..Default::default()
        };
        for _ in 0..50 {
            let s = random_scene(&mut rng, &params);
            s.validate().unwrap();
            assert_eq!(SceneSpec::from_toml(&s.to_toml()).unwrap(), s);
        }
    }
}
