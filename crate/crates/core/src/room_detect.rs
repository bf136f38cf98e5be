//! Room detection: ceiling segmentation, ceiling hole filling, floor
//! detection, hole finalisation and wall contour seeding.
//!
//! Rooms are found as large 26-connected components of downward-facing
//! voxels. Each component is projected to a 2D pixel grid holding an integer
//! height per pixel; enclosed gaps in that grid are holes whose heights are
//! interpolated by 2D ray casting. Floors are traced straight down from the
//! ceiling, grown into height-continuous segments and completed with the same
//! ray procedure.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{metric_to_voxels, NormalState, VoxelGrid};
use crate::labels::RoomId;
use crate::par;
use crate::voxelizer::NormalCone;

/// Every numeric threshold of the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructionConfig {
    /// m²
    pub min_ceiling_area: f64,
    /// m²
    pub min_floor_area: f64,
    /// m
    pub max_step_height: f64,
    pub hole_fill_ratio: f64,
    pub border_wall_ratio: f64,
    /// m
    pub wall_search_out: f64,
    /// m
    pub wall_search_in: f64,
    /// m
    pub occlusion_search: f64,
    /// degrees
    pub normal_cone: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            min_ceiling_area: 0.5,
            min_floor_area: 0.5,
            max_step_height: 0.18,
            hole_fill_ratio: 0.75,
            border_wall_ratio: 0.75,
            wall_search_out: 0.15,
            wall_search_in: 0.15,
            occlusion_search: 0.70,
            normal_cone: 45.0,
        }
    }
}

impl ReconstructionConfig {
    pub const KEYS: [&'static str; 9] = [
        "min_ceiling_area",
        "min_floor_area",
        "max_step_height",
        "hole_fill_ratio",
        "border_wall_ratio",
        "wall_search_out",
        "wall_search_in",
        "occlusion_search",
        "normal_cone",
    ];

    fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "min_ceiling_area" => &mut self.min_ceiling_area,
            "min_floor_area" => &mut self.min_floor_area,
            "max_step_height" => &mut self.max_step_height,
            "hole_fill_ratio" => &mut self.hole_fill_ratio,
            "border_wall_ratio" => &mut self.border_wall_ratio,
            "wall_search_out" => &mut self.wall_search_out,
            "wall_search_in" => &mut self.wall_search_in,
            "occlusion_search" => &mut self.occlusion_search,
            "normal_cone" => &mut self.normal_cone,
            _ => return None,
        })
    }

    /// Sets a field by its name from text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let slot = self
            .field_mut(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown config key `{key}`")))?;
        *slot = value.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("config key `{key}`: `{value}` is not a number"))
        })?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_ceiling_area", self.min_ceiling_area),
            ("min_floor_area", self.min_floor_area),
            ("max_step_height", self.max_step_height),
            ("wall_search_out", self.wall_search_out),
            ("wall_search_in", self.wall_search_in),
            ("occlusion_search", self.occlusion_search),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("hole_fill_ratio", self.hole_fill_ratio),
            ("border_wall_ratio", self.border_wall_ratio),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        NormalCone::new(self.normal_cone)?;
        Ok(())
    }

    pub fn cone(&self) -> NormalCone {
        NormalCone {
            half_angle_deg: self.normal_cone,
        }
    }
}

/// Tolerance for area and ratio thresholds.
const THRESH_EPS: f64 = 1e-9;

/// Switches downward voxels that sit directly on a horizontal voxel to
/// horizontal, sweeping bottom-up so the change cascades up a column.
pub fn presweep_reclassify(grid: &VoxelGrid) -> VoxelGrid {
    let mut out = grid.clone();
    let n = grid.spec.section_len();
    for k in 1..grid.spec.dims[2] {
        let (below, rest) = out.cells.split_at_mut(k * n);
        let below = &below[(k - 1) * n..];
        let here = &mut rest[..n];
        for (c, b) in here.iter_mut().zip(below) {
            if *c == NormalState::NormalDown && *b == NormalState::NormalHorizontal {
                *c = NormalState::NormalHorizontal;
            }
        }
    }
    out
}

/// A 26-connected component of downward voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct CeilingSegment {
    /// Linear voxel indices, ascending.
    pub voxels: Vec<usize>,
    /// Number of distinct (x, y) columns.
    pub columns: usize,
    /// Horizontal coverage in m².
    pub coverage: f64,
}

/// Accepted ceiling segments, sorted by descending coverage, plus a dense
/// per-voxel map from voxel to segment (index + 1, 0 for none).
#[derive(Clone, Debug)]
pub struct SegmentSet {
    pub segments: Vec<CeilingSegment>,
    pub labels: Vec<u32>,
    /// Components dropped by the coverage filter.
    pub discarded: usize,
}

impl SegmentSet {
    /// Index of the accepted segment owning a voxel.
    #[inline]
    pub fn segment_of(&self, voxel: usize) -> Option<usize> {
        let l = self.labels[voxel];
        (l != 0).then(|| l as usize - 1)
    }
}

/// Labels 26-connected components of downward voxels and keeps those with
/// enough horizontal coverage.
pub fn detect_ceiling_segments(grid: &VoxelGrid, cfg: &ReconstructionConfig) -> SegmentSet {
    let spec = grid.spec;
    let vs2 = spec.voxel_size * spec.voxel_size;
    let mut visited = vec![false; grid.cells.len()];
    let mut components: Vec<CeilingSegment> = Vec::new();
    let mut discarded = 0;
    let mut stack = Vec::new();
    for start in 0..grid.cells.len() {
        if visited[start] || grid.cells[start] != NormalState::NormalDown {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut voxels = Vec::new();
        while let Some(v) = stack.pop() {
            voxels.push(v);
            let idx = spec.unlinear(v);
            for d in crate::grid::N26_OFFSETS {
                if let Some(n) = spec.offset(idx, d) {
                    let ni = spec.linear(n);
                    if !visited[ni] && grid.cells[ni] == NormalState::NormalDown {
                        visited[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        voxels.sort_unstable();
        let mut cols: Vec<usize> = voxels.iter().map(|&v| v % spec.section_len()).collect();
        cols.sort_unstable();
        cols.dedup();
        let coverage = cols.len() as f64 * vs2;
        if coverage + THRESH_EPS < cfg.min_ceiling_area {
            discarded += 1;
            continue;
        }
        components.push(CeilingSegment {
            voxels,
            columns: cols.len(),
            coverage,
        });
    }
    // stable: equal coverage keeps discovery (lowest voxel index) order
    components.sort_by_key(|c| std::cmp::Reverse(c.columns));
    let mut labels = vec![0u32; grid.cells.len()];
    for (i, seg) in components.iter().enumerate() {
        for &v in &seg.voxels {
            labels[v] = i as u32 + 1;
        }
    }
    SegmentSet {
        segments: components,
        labels,
        discarded,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PixelState {
    Empty,
    Ceiling,
    Hole,
    FloorCandidate,
    Floor,
}

/// Horizontal raster over a room's bounding box. Pixel `(u, v)` covers grid
/// column `(offset[0] + u, offset[1] + v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid2D {
    pub offset: [usize; 2],
    pub dims: [usize; 2],
    pub state: Vec<PixelState>,
    /// Voxel-grid height per pixel; meaningful where the state is not Empty.
    pub height: Vec<i32>,
}

const N4: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];
const N8: [[i64; 2]; 8] = [
    [-1, -1],
    [0, -1],
    [1, -1],
    [-1, 0],
    [1, 0],
    [-1, 1],
    [0, 1],
    [1, 1],
];

impl PixelGrid2D {
    pub fn new(offset: [usize; 2], dims: [usize; 2]) -> Self {
        let n = dims[0] * dims[1];
        PixelGrid2D {
            offset,
            dims,
            state: vec![PixelState::Empty; n],
            height: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    #[inline]
    pub fn uv(&self, p: usize) -> [usize; 2] {
        [p % self.dims[0], p / self.dims[0]]
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        u + self.dims[0] * v
    }

    /// Grid column (x, y) of a pixel.
    #[inline]
    pub fn column(&self, p: usize) -> [usize; 2] {
        let [u, v] = self.uv(p);
        [self.offset[0] + u, self.offset[1] + v]
    }

    /// Pixel covering grid column (x, y), if inside the raster.
    pub fn pixel_at(&self, x: i64, y: i64) -> Option<usize> {
        let u = x - self.offset[0] as i64;
        let v = y - self.offset[1] as i64;
        (u >= 0 && v >= 0 && (u as usize) < self.dims[0] && (v as usize) < self.dims[1])
            .then(|| self.index(u as usize, v as usize))
    }

    #[inline]
    fn step(&self, p: usize, d: [i64; 2]) -> Option<usize> {
        let [u, v] = self.uv(p);
        let nu = u as i64 + d[0];
        let nv = v as i64 + d[1];
        (nu >= 0 && nv >= 0 && (nu as usize) < self.dims[0] && (nv as usize) < self.dims[1])
            .then(|| self.index(nu as usize, nv as usize))
    }

    pub fn count(&self, state: PixelState) -> usize {
        self.state.iter().filter(|&&s| s == state).count()
    }
}

/// Projects a ceiling segment onto the horizontal plane; each covered pixel
/// takes the lowest segment voxel of its column.
pub fn project_ceiling(segment: &CeilingSegment, grid: &VoxelGrid) -> PixelGrid2D {
    let spec = grid.spec;
    let mut lo = [usize::MAX; 2];
    let mut hi = [0usize; 2];
    for &v in &segment.voxels {
        let [x, y, _] = spec.unlinear(v);
        lo = [lo[0].min(x), lo[1].min(y)];
        hi = [hi[0].max(x), hi[1].max(y)];
    }
    let mut px = PixelGrid2D::new(lo, [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1]);
    for &v in &segment.voxels {
        let [x, y, z] = spec.unlinear(v);
        let p = px.index(x - lo[0], y - lo[1]);
        if px.state[p] == PixelState::Empty || (z as i32) < px.height[p] {
            px.state[p] = PixelState::Ceiling;
            px.height[p] = z as i32;
        }
    }
    px
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoleDecision {
    Undecided,
    Close,
    KeepOpen,
}

/// A 4-connected set of hole pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct HoleSegment {
    /// Pixel indices, ascending.
    pub pixels: Vec<usize>,
    pub decision: HoleDecision,
}

/// 4-connected components of the pixels selected by `mask`, each sorted,
/// ordered by their smallest pixel.
fn components4(px: &PixelGrid2D, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for s in 0..mask.len() {
        if !mask[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        stack.push(s);
        let mut comp = Vec::new();
        while let Some(p) = stack.pop() {
            comp.push(p);
            for d in N4 {
                if let Some(q) = px.step(p, d) {
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Marks empty pixels enclosed by ceiling pixels along a row, a column or a
/// diagonal as holes and groups them into 4-connected segments.
pub fn detect_holes(ceiling: &mut PixelGrid2D) -> Vec<HoleSegment> {
    let n = ceiling.len();
    let mut hole = vec![false; n];
    let mut line = Vec::new();
    for d in [[1i64, 0], [0, 1], [1, 1], [1, -1]] {
        let back = [-d[0], -d[1]];
        for start in 0..n {
            if ceiling.step(start, back).is_some() {
                continue;
            }
            line.clear();
            let mut p = Some(start);
            while let Some(q) = p {
                line.push(q);
                p = ceiling.step(q, d);
            }
            let first = line.iter().position(|&q| ceiling.state[q] == PixelState::Ceiling);
            let last = line.iter().rposition(|&q| ceiling.state[q] == PixelState::Ceiling);
            if let (Some(a), Some(b)) = (first, last) {
                for &q in &line[a..b] {
                    if ceiling.state[q] == PixelState::Empty {
                        hole[q] = true;
                    }
                }
            }
        }
    }
    for (p, &h) in hole.iter().enumerate() {
        if h {
            ceiling.state[p] = PixelState::Hole;
        }
    }
    components4(ceiling, &hole)
        .into_iter()
        .map(|pixels| HoleSegment {
            pixels,
            decision: HoleDecision::Undecided,
        })
        .collect()
}

#[inline]
fn round_half_up(x: f64) -> i32 {
    (x + 0.5 + 1e-9).floor() as i32
}

/// Integer mean rounded half-up.
#[inline]
fn mean_round(sum: i64, count: i64) -> i32 {
    (2 * sum + count).div_euclid(2 * count) as i32
}

/// Fills `targets` by 2D ray casting from known pixels.
///
/// Rays start at known pixels 4-adjacent to a target and run along the
/// eight row, column and diagonal senses through consecutive target pixels.
/// A ray ending at a known pixel interpolates linearly between its two end
/// heights; any other ray copies its start height. A target's value is the
/// mean over all rays crossing it, rounded half-up. Targets no ray reaches
/// are filled in further passes that also start from the pixels filled so
/// far.
fn ray_fill(px: &PixelGrid2D, known: &[bool], targets: &[bool], heights: &mut [i32]) -> Result<(), String> {
    let n = px.len();
    let mut known = known.to_vec();
    let mut remaining = targets.to_vec();
    let mut left = remaining.iter().filter(|&&t| t).count();
    let mut sum = vec![0.0f64; n];
    let mut cnt = vec![0u32; n];
    let mut path = Vec::new();
    while left > 0 {
        sum.iter_mut().for_each(|s| *s = 0.0);
        cnt.iter_mut().for_each(|c| *c = 0);
        for p in 0..n {
            if !known[p] || !N4.iter().any(|&d| px.step(p, d).is_some_and(|q| remaining[q])) {
                continue;
            }
            let hs = heights[p] as f64;
            for d in N8 {
                let Some(first) = px.step(p, d).filter(|&q| remaining[q]) else {
                    continue;
                };
                path.clear();
                path.push(first);
                let mut end = px.step(first, d);
                while let Some(q) = end.filter(|&q| remaining[q]) {
                    path.push(q);
                    end = px.step(q, d);
                }
                match end.filter(|&q| known[q]) {
                    Some(e) => {
                        let he = heights[e] as f64;
                        let len = (path.len() + 1) as f64;
                        for (t, &q) in path.iter().enumerate() {
                            sum[q] += hs + (he - hs) * (t + 1) as f64 / len;
                            cnt[q] += 1;
                        }
                    }
                    None => {
                        for &q in &path {
                            sum[q] += hs;
                            cnt[q] += 1;
                        }
                    }
                }
            }
        }
        let mut filled = 0;
        for q in 0..n {
            if remaining[q] && cnt[q] > 0 {
                heights[q] = round_half_up(sum[q] / cnt[q] as f64);
                remaining[q] = false;
                known[q] = true;
                filled += 1;
            }
        }
        if filled == 0 {
            return Err(format!("{left} pixels unreachable from any known pixel"));
        }
        left -= filled;
    }
    Ok(())
}

/// One 3×3 masked mean pass over each segment; a window pixel counts if it
/// belongs to the same segment or is known.
fn smooth_segments(px: &PixelGrid2D, segments: &[Vec<usize>], known: &[bool], heights: &mut [i32]) {
    let snapshot = heights.to_vec();
    let mut member = vec![usize::MAX; px.len()];
    for (s, seg) in segments.iter().enumerate() {
        for &p in seg {
            member[p] = s;
        }
    }
    for (s, seg) in segments.iter().enumerate() {
        for &p in seg {
            let mut total = snapshot[p] as i64;
            let mut count = 1i64;
            for d in N8 {
                if let Some(q) = px.step(p, d) {
                    if member[q] == s || known[q] {
                        total += snapshot[q] as i64;
                        count += 1;
                    }
                }
            }
            heights[p] = mean_round(total, count);
        }
    }
}

/// Assigns heights to all hole pixels (ray interpolation, then one
/// smoothing pass per hole segment).
pub fn interpolate_hole_heights(ceiling: &mut PixelGrid2D, holes: &[HoleSegment]) -> Result<()> {
    let known: Vec<bool> = ceiling.state.iter().map(|&s| s == PixelState::Ceiling).collect();
    let targets: Vec<bool> = ceiling.state.iter().map(|&s| s == PixelState::Hole).collect();
    let mut heights = ceiling.height.clone();
    ray_fill(ceiling, &known, &targets, &mut heights).map_err(Error::Invariant)?;
    let segs: Vec<Vec<usize>> = holes.iter().map(|h| h.pixels.clone()).collect();
    smooth_segments(ceiling, &segs, &known, &mut heights);
    ceiling.height = heights;
    Ok(())
}

/// Traces down from every ceiling and hole pixel to the first upward voxel.
/// The trace gives up at the grid bottom or at a downward voxel of another
/// accepted ceiling segment.
pub fn trace_floors(
    ceiling: &PixelGrid2D,
    grid: &VoxelGrid,
    segments: &SegmentSet,
    own_segment: usize,
) -> PixelGrid2D {
    let spec = grid.spec;
    let mut floor = PixelGrid2D::new(ceiling.offset, ceiling.dims);
    for p in 0..ceiling.len() {
        if !matches!(ceiling.state[p], PixelState::Ceiling | PixelState::Hole) {
            continue;
        }
        let [x, y] = ceiling.column(p);
        let mut z = ceiling.height[p];
        while z > 0 {
            z -= 1;
            let v = spec.linear([x, y, z as usize]);
            match grid.cells[v] {
                NormalState::NormalUp => {
                    floor.state[p] = PixelState::FloorCandidate;
                    floor.height[p] = z;
                    break;
                }
                NormalState::NormalDown
                    if segments.segment_of(v).is_some_and(|s| s != own_segment) => {
                        break;
                    }
                _ => {}
            }
        }
    }
    floor
}

/// Groups floor candidates into 8-connected segments with bounded height
/// steps and keeps the one containing the lowest height.
pub fn segment_and_select_floor(
    floor: &mut PixelGrid2D,
    cfg: &ReconstructionConfig,
    voxel_size: f64,
) -> Result<(), String> {
    let max_step = metric_to_voxels(cfg.max_step_height, voxel_size) as i32;
    let n = floor.len();
    let mut seen = vec![false; n];
    let mut segments: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] || floor.state[s] != PixelState::FloorCandidate {
            continue;
        }
        seen[s] = true;
        stack.push(s);
        let mut seg = Vec::new();
        while let Some(p) = stack.pop() {
            seg.push(p);
            for d in N8 {
                if let Some(q) = floor.step(p, d) {
                    if !seen[q]
                        && floor.state[q] == PixelState::FloorCandidate
                        && (floor.height[q] - floor.height[p]).abs() <= max_step
                    {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        seg.sort_unstable();
        segments.push(seg);
    }
    if segments.is_empty() {
        return Err("room has no floor".into());
    }
    let area = |s: &Vec<usize>| s.len() as f64 * voxel_size * voxel_size;
    let large: Vec<usize> = (0..segments.len())
        .filter(|&i| area(&segments[i]) + THRESH_EPS >= cfg.min_floor_area)
        .collect();
    let pool: Vec<usize> = if large.is_empty() {
        (0..segments.len()).collect()
    } else {
        large
    };
    let min_h = |s: &Vec<usize>| s.iter().map(|&p| floor.height[p]).min().unwrap();
    let mut best = pool[0];
    for &i in &pool[1..] {
        let (a, b) = (&segments[i], &segments[best]);
        if min_h(a) < min_h(b) || (min_h(a) == min_h(b) && a.len() > b.len()) {
            best = i;
        }
    }
    for p in 0..n {
        if floor.state[p] == PixelState::FloorCandidate {
            floor.state[p] = PixelState::Empty;
        }
    }
    for &p in &segments[best] {
        floor.state[p] = PixelState::Floor;
    }
    Ok(())
}

/// Gives every ceiling or hole column a floor height, filling columns
/// without a detected floor by the hole ray procedure. Floors are kept at
/// least one voxel below the ceiling.
pub fn fill_floor_heights(floor: &mut PixelGrid2D, ceiling: &PixelGrid2D) -> Result<(), String> {
    let known: Vec<bool> = floor.state.iter().map(|&s| s == PixelState::Floor).collect();
    if !known.iter().any(|&k| k) {
        return Err("no floor pixel to fill from".into());
    }
    let targets: Vec<bool> = (0..floor.len())
        .map(|p| {
            matches!(ceiling.state[p], PixelState::Ceiling | PixelState::Hole)
                && floor.state[p] != PixelState::Floor
        })
        .collect();
    let mut heights = floor.height.clone();
    ray_fill(floor, &known, &targets, &mut heights)?;
    let segs = components4(floor, &targets);
    smooth_segments(floor, &segs, &known, &mut heights);
    for p in 0..floor.len() {
        if targets[p] {
            floor.state[p] = PixelState::Floor;
        }
        if floor.state[p] == PixelState::Floor {
            if ceiling.height[p] <= 0 {
                return Err("ceiling at the grid bottom".into());
            }
            heights[p] = heights[p].min(ceiling.height[p] - 1);
        }
    }
    floor.height = heights;
    Ok(())
}

/// Wall contour voxel column: the contour position (x, y) spans heights
/// `bottom..=top`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContourVoxel {
    pub column: [usize; 2],
    /// Highest neighbouring ceiling height.
    pub top: usize,
    /// Lowest neighbouring floor height.
    pub bottom: usize,
}

impl ContourVoxel {
    /// The seed voxel (at ceiling level).
    pub fn voxel(&self) -> [usize; 3] {
        [self.column[0], self.column[1], self.top]
    }
}

/// Room candidate after ceiling refinement and floor detection.
#[derive(Clone, Debug, PartialEq)]
pub struct RoomCandidate {
    pub segment: usize,
    pub ceiling: PixelGrid2D,
    pub floor: PixelGrid2D,
    pub holes: Vec<HoleSegment>,
}

/// A finished room.
#[derive(Clone, Debug, PartialEq)]
pub struct RoomModel {
    pub id: RoomId,
    pub segment: usize,
    pub ceiling: PixelGrid2D,
    pub floor: PixelGrid2D,
    pub holes: Vec<HoleSegment>,
    pub wall_contour: Vec<ContourVoxel>,
}

impl RoomModel {
    /// Vertical extent `(floor, ceiling)` of every column the room occupies:
    /// ceiling pixels and wall contour columns.
    pub fn column_ranges(&self) -> Vec<([usize; 2], (usize, usize))> {
        let mut out = Vec::new();
        for p in 0..self.ceiling.len() {
            if self.ceiling.state[p] == PixelState::Ceiling {
                out.push((
                    self.ceiling.column(p),
                    (self.floor.height[p] as usize, self.ceiling.height[p] as usize),
                ));
            }
        }
        for c in &self.wall_contour {
            out.push((c.column, (c.bottom, c.top)));
        }
        out
    }

    /// Descriptions of broken room invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in 0..self.ceiling.len() {
            if self.ceiling.state[p] == PixelState::Ceiling {
                if self.floor.state[p] != PixelState::Floor {
                    out.push(format!("room {}: ceiling pixel {p} has no floor", self.id));
                } else if self.floor.height[p] >= self.ceiling.height[p] {
                    out.push(format!("room {}: floor not below ceiling at pixel {p}", self.id));
                }
            }
        }
        for c in &self.wall_contour {
            if let Some(p) = self.ceiling.pixel_at(c.column[0] as i64, c.column[1] as i64) {
                if self.ceiling.state[p] == PixelState::Ceiling {
                    out.push(format!("room {}: contour on a ceiling pixel", self.id));
                }
            }
        }
        out
    }
}

/// Ceiling refinement for one segment: projection, hole detection and hole
/// height interpolation.
pub fn refine_ceiling(segment: &CeilingSegment, grid: &VoxelGrid) -> Result<(PixelGrid2D, Vec<HoleSegment>)> {
    let mut ceiling = project_ceiling(segment, grid);
    let holes = detect_holes(&mut ceiling);
    interpolate_hole_heights(&mut ceiling, &holes)?;
    Ok((ceiling, holes))
}

/// Floor detection for one refined ceiling.
pub fn detect_floor(
    ceiling: &PixelGrid2D,
    grid: &VoxelGrid,
    segments: &SegmentSet,
    segment: usize,
    cfg: &ReconstructionConfig,
) -> Result<PixelGrid2D, String> {
    let mut floor = trace_floors(ceiling, grid, segments, segment);
    segment_and_select_floor(&mut floor, cfg, grid.spec.voxel_size)?;
    fill_floor_heights(&mut floor, ceiling)?;
    Ok(floor)
}

/// Column occupancy of the rooms finished so far.
#[derive(Clone, Debug, Default)]
pub struct BuiltRooms {
    ranges: HashMap<[usize; 2], Vec<(usize, usize)>>,
}

impl BuiltRooms {
    pub fn add(&mut self, room: &RoomModel) {
        for (col, r) in room.column_ranges() {
            self.ranges.entry(col).or_default().push(r);
        }
    }

    fn overlaps(&self, col: [usize; 2], lo: usize, hi: usize) -> bool {
        self.ranges
            .get(&col)
            .is_some_and(|rs| rs.iter().any(|&(a, b)| a <= hi && lo <= b))
    }
}

fn non_empty_between(grid: &VoxelGrid, col: [usize; 2], floor: i32, ceil: i32) -> usize {
    let spec = grid.spec;
    ((floor + 1).max(0)..ceil.max(0))
        .filter(|&z| !grid.cells[spec.linear([col[0], col[1], z as usize])].is_empty())
        .count()
}

/// Decides each hole: keep it open when it overlaps an earlier room, close it
/// when enough of it is occupied by geometry, otherwise keep it open only if
/// its border looks like a wall. Closed holes become ceiling pixels; open
/// ones are cleared from both rasters.
pub fn finalize_holes(
    candidate: &mut RoomCandidate,
    grid: &VoxelGrid,
    built: &BuiltRooms,
    cfg: &ReconstructionConfig,
) {
    let ceiling = &mut candidate.ceiling;
    let floor = &mut candidate.floor;
    for hole in &mut candidate.holes {
        let range = |p: usize| (floor.height[p], ceiling.height[p]);
        let overlap = hole.pixels.iter().any(|&p| {
            let (f, c) = range(p);
            built.overlaps(ceiling.column(p), f.max(0) as usize, c.max(0) as usize)
        });
        hole.decision = if overlap {
            HoleDecision::KeepOpen
        } else {
            let occupied = hole
                .pixels
                .iter()
                .filter(|&&p| {
                    let (f, c) = range(p);
                    non_empty_between(grid, ceiling.column(p), f, c) > 0
                })
                .count();
            let fill = occupied as f64 / hole.pixels.len() as f64;
            if fill + THRESH_EPS >= cfg.hole_fill_ratio {
                HoleDecision::Close
            } else {
                let mut filled = 0usize;
                let mut total = 0usize;
                for &p in &hole.pixels {
                    let pairs = N4
                        .iter()
                        .filter(|&&d| {
                            ceiling.step(p, d).is_some_and(|q| ceiling.state[q] == PixelState::Ceiling)
                        })
                        .count();
                    if pairs == 0 {
                        continue;
                    }
                    let (f, c) = range(p);
                    filled += pairs * non_empty_between(grid, ceiling.column(p), f, c);
                    total += pairs * (c - f - 1).max(0) as usize;
                }
                let wall_like =
                    total > 0 && filled as f64 / total as f64 + THRESH_EPS >= cfg.border_wall_ratio;
                if wall_like {
                    HoleDecision::KeepOpen
                } else {
                    HoleDecision::Close
                }
            }
        };
        for &p in &hole.pixels {
            match hole.decision {
                HoleDecision::Close => {
                    ceiling.state[p] = PixelState::Ceiling;
                    floor.state[p] = PixelState::Floor;
                }
                _ => {
                    ceiling.state[p] = PixelState::Empty;
                    floor.state[p] = PixelState::Empty;
                }
            }
        }
    }
}

/// One 3×3 masked smoothing pass over ceiling and floor heights (reverting
/// pixels where the floor would reach the ceiling) and the wall contour.
/// Neighbours more than `max_step` voxels away in height are left out of the
/// mean, so jumps that later become walls keep their full height.
pub fn smooth_and_contour(candidate: RoomCandidate, id: RoomId, grid_dims: [usize; 3], max_step: i32) -> RoomModel {
    let RoomCandidate {
        segment,
        mut ceiling,
        mut floor,
        holes,
    } = candidate;
    let mask: Vec<bool> = ceiling.state.iter().map(|&s| s == PixelState::Ceiling).collect();
    let smooth = |px: &PixelGrid2D| -> Vec<i32> {
        let mut out = px.height.clone();
        for p in 0..px.len() {
            if !mask[p] {
                continue;
            }
            let mut total = px.height[p] as i64;
            let mut count = 1i64;
            for d in N8 {
                if let Some(q) = px.step(p, d) {
                    if mask[q] && (px.height[q] - px.height[p]).abs() <= max_step {
                        total += px.height[q] as i64;
                        count += 1;
                    }
                }
            }
            out[p] = mean_round(total, count);
        }
        out
    };
    let ch = smooth(&ceiling);
    let fh = smooth(&floor);
    for p in 0..ceiling.len() {
        if mask[p] && fh[p] < ch[p] {
            ceiling.height[p] = ch[p];
            floor.height[p] = fh[p];
        }
    }

    let mut wall_contour = Vec::new();
    let (x0, y0) = (ceiling.offset[0] as i64, ceiling.offset[1] as i64);
    for yy in y0 - 1..=y0 + ceiling.dims[1] as i64 {
        for xx in x0 - 1..=x0 + ceiling.dims[0] as i64 {
            if xx < 0 || yy < 0 || xx >= grid_dims[0] as i64 || yy >= grid_dims[1] as i64 {
                continue;
            }
            if ceiling
                .pixel_at(xx, yy)
                .is_some_and(|p| ceiling.state[p] == PixelState::Ceiling)
            {
                continue;
            }
            let mut top = None::<i32>;
            let mut bottom = None::<i32>;
            for d in N8 {
                if let Some(q) = ceiling.pixel_at(xx + d[0], yy + d[1]) {
                    if ceiling.state[q] == PixelState::Ceiling {
                        top = Some(top.map_or(ceiling.height[q], |t| t.max(ceiling.height[q])));
                        bottom = Some(bottom.map_or(floor.height[q], |b| b.min(floor.height[q])));
                    }
                }
            }
            if let (Some(t), Some(b)) = (top, bottom) {
                wall_contour.push(ContourVoxel {
                    column: [xx as usize, yy as usize],
                    top: t as usize,
                    bottom: b as usize,
                });
            }
        }
    }
    RoomModel {
        id,
        segment,
        ceiling,
        floor,
        holes,
        wall_contour,
    }
}

/// Counters reported by room detection.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct RoomDiagnostics {
    pub discarded_segments: usize,
    pub rooms_without_floor: usize,
    pub holes_closed: usize,
    pub holes_kept_open: usize,
}

/// Runs ceiling refinement for every segment in parallel.
pub fn refine_ceilings(grid: &VoxelGrid, segments: &SegmentSet) -> Result<Vec<(PixelGrid2D, Vec<HoleSegment>)>> {
    par::map(&segments.segments, |s| refine_ceiling(s, grid))
        .into_iter()
        .collect()
}

/// Runs floor detection for every refined ceiling in parallel. Rooms without
/// a floor are dropped with a warning.
pub fn detect_floors(
    grid: &VoxelGrid,
    segments: &SegmentSet,
    ceilings: Vec<(PixelGrid2D, Vec<HoleSegment>)>,
    cfg: &ReconstructionConfig,
    diag: &mut RoomDiagnostics,
) -> Vec<RoomCandidate> {
    let indexed: Vec<(usize, (PixelGrid2D, Vec<HoleSegment>))> = ceilings.into_iter().enumerate().collect();
    let floors = par::map(&indexed, |(s, (ceiling, _))| detect_floor(ceiling, grid, segments, *s, cfg));
    let mut out = Vec::new();
    for ((segment, (ceiling, holes)), floor) in indexed.into_iter().zip(floors) {
        match floor {
            Ok(floor) => out.push(RoomCandidate {
                segment,
                ceiling,
                floor,
                holes,
            }),
            Err(msg) => {
                log::warn!("ceiling segment {segment} discarded: {msg}");
                diag.rooms_without_floor += 1;
            }
        }
    }
    out
}

/// Finalises candidates in order (largest first), numbering rooms from 1.
pub fn finalize_rooms(
    candidates: Vec<RoomCandidate>,
    grid: &VoxelGrid,
    cfg: &ReconstructionConfig,
    diag: &mut RoomDiagnostics,
) -> Vec<RoomModel> {
    let max_step = metric_to_voxels(cfg.max_step_height, grid.spec.voxel_size) as i32;
    let mut built = BuiltRooms::default();
    let mut rooms = Vec::new();
    for mut cand in candidates {
        finalize_holes(&mut cand, grid, &built, cfg);
        for h in &cand.holes {
            match h.decision {
                HoleDecision::Close => diag.holes_closed += 1,
                _ => diag.holes_kept_open += 1,
            }
        }
        if cand.ceiling.count(PixelState::Ceiling) == 0 {
            log::warn!("ceiling segment {} has no pixels left", cand.segment);
            continue;
        }
        let room = smooth_and_contour(cand, RoomId(rooms.len() as u32 + 1), grid.spec.dims, max_step);
        built.add(&room);
        rooms.push(room);
    }
    rooms
}
