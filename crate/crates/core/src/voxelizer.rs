//! Conservative mesh voxelization with per-voxel normal classification.
//!
//! Every voxel whose closed box intersects a closed triangle becomes
//! non-empty. Each intersecting triangle votes with the class of its face
//! normal (up, down or horizontal); the majority wins, ties going to
//! horizontal, then down, then up.

use crate::error::{Error, Result};
use crate::grid::{cross, dot, sub, GridSpec, NormalState, UpAxis, Vec3, VoxelGrid};
use crate::mesh_io::TriangleMesh;
use crate::par;

/// Half-angle of the up/down cones used by [`classify_normal`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalCone {
    pub half_angle_deg: f64,
}

impl Default for NormalCone {
    fn default() -> Self {
        NormalCone {
            half_angle_deg: 45.0,
        }
    }
}

impl NormalCone {
    pub fn new(half_angle_deg: f64) -> Result<Self> {
        if !(half_angle_deg > 0.0 && half_angle_deg < 90.0) {
            return Err(Error::InvalidArgument(format!(
                "normal cone half angle must be in (0, 90) degrees, got {half_angle_deg}"
            )));
        }
        Ok(NormalCone { half_angle_deg })
    }
}

/// Tolerance on the unit length of normals.
const UNIT_TOL: f64 = 1e-6;
/// Angular slack (in cosine) that keeps the cone boundary inclusive.
const CONE_TOL: f64 = 1e-9;

/// Classifies a unit face normal relative to the up direction. The cone
/// boundary belongs to up/down.
pub fn classify_normal(n: Vec3, up: UpAxis, cone: NormalCone) -> Result<NormalState> {
    let len = dot(n, n).sqrt();
    if !((len - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::InvalidArgument(format!(
            "normal {n:?} is not unit length (|n| = {len})"
        )));
    }
    Ok(classify_unit(n, up.vector(), cone.half_angle_deg.to_radians().cos()))
}

#[inline]
fn classify_unit(n: Vec3, up: Vec3, cos_half: f64) -> NormalState {
    let c = dot(n, up);
    if c >= cos_half - CONE_TOL {
        NormalState::NormalUp
    } else if c <= -(cos_half - CONE_TOL) {
        NormalState::NormalDown
    } else {
        NormalState::NormalHorizontal
    }
}

/// Closed triangle / closed axis-aligned box intersection by the separating
/// axis theorem (box normals, triangle normal, 9 edge cross products).
pub fn triangle_overlaps_voxel(tri: [Vec3; 3], box_min: Vec3, box_max: Vec3) -> Result<bool> {
    let n = cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]));
    if dot(n, n) == 0.0 || !dot(n, n).is_finite() {
        return Err(Error::DegenerateTriangle);
    }
    Ok(overlaps(tri, n, box_min, box_max))
}

#[inline]
fn overlaps(tri: [Vec3; 3], normal: Vec3, box_min: Vec3, box_max: Vec3) -> bool {
    let c = [
        0.5 * (box_min[0] + box_max[0]),
        0.5 * (box_min[1] + box_max[1]),
        0.5 * (box_min[2] + box_max[2]),
    ];
    let h = [
        0.5 * (box_max[0] - box_min[0]),
        0.5 * (box_max[1] - box_min[1]),
        0.5 * (box_max[2] - box_min[2]),
    ];
    let eps = 1e-9 * h[0].max(h[1]).max(h[2]);
    let v = [sub(tri[0], c), sub(tri[1], c), sub(tri[2], c)];

    // box face normals
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > h[a] + eps || hi < -h[a] - eps {
            return false;
        }
    }

    // triangle plane
    let d = dot(normal, v[0]);
    let r = h[0] * normal[0].abs() + h[1] * normal[1].abs() + h[2] * normal[2].abs();
    let nlen = dot(normal, normal).sqrt();
    if d.abs() > r + eps * nlen {
        return false;
    }

    // edge cross products
    let edges = [sub(v[1], v[0]), sub(v[2], v[1]), sub(v[0], v[2])];
    for e in edges {
        for a in 0..3 {
            let mut axis = [0.0; 3];
            axis[a] = 1.0;
            let ax = cross(axis, e);
            let len = dot(ax, ax).sqrt();
            if len == 0.0 {
                continue;
            }
            let p0 = dot(ax, v[0]);
            let p1 = dot(ax, v[1]);
            let p2 = dot(ax, v[2]);
            let r = h[0] * ax[0].abs() + h[1] * ax[1].abs() + h[2] * ax[2].abs();
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            if lo > r + eps * len || hi < -r - eps * len {
                return false;
            }
        }
    }
    true
}

/// Largest grid the voxelizer builds unless told otherwise.
pub const DEFAULT_CELL_CAP: u128 = 1 << 31;

/// How the voxelizer should place its grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelizeRequest {
    pub voxel_size: f64,
    pub padding: usize,
    pub up_axis: UpAxis,
    pub cone: NormalCone,
    /// Use exactly this grid instead of fitting one to the mesh.
    pub fixed: Option<GridSpec>,
    pub cell_cap: u128,
}

impl Default for VoxelizeRequest {
    fn default() -> Self {
        VoxelizeRequest {
            voxel_size: 0.05,
            padding: 2,
            up_axis: UpAxis::default(),
            cone: NormalCone::default(),
            fixed: None,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

/// Grid covering the canonical-frame box `[lo, hi]` plus `padding` voxels on
/// every side. The origin is offset by half a voxel so that the box's min
/// corner sits at a voxel center: surfaces lying on whole multiples of the
/// voxel size from that corner then fall in exactly one voxel layer instead
/// of straddling a voxel face.
pub fn fit_grid(
    lo: Vec3,
    hi: Vec3,
    voxel_size: f64,
    padding: usize,
    up_axis: UpAxis,
    cell_cap: u128,
) -> Result<GridSpec> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let shift = (padding as f64 + 0.5) * voxel_size;
    let origin = [lo[0] - shift, lo[1] - shift, lo[2] - shift];
    let mut dims = [0usize; 3];
    let mut cells: u128 = 1;
    for a in 0..3 {
        let span = ((hi[a] - origin[a]) / voxel_size).floor();
        if !span.is_finite() || !(0.0..=1e12).contains(&span) {
            return Err(Error::InvalidArgument(format!("bad extent on axis {a}")));
        }
        dims[a] = span as usize + 1 + padding;
        cells *= dims[a] as u128;
    }
    if cells > cell_cap {
        return Err(Error::GridTooLarge {
            cells,
            cap: cell_cap,
        });
    }
    GridSpec::new(origin, voxel_size, dims, up_axis)
}

/// Canonical-frame bounds of a mesh.
pub fn canonical_bounds(mesh: &TriangleMesh, up: UpAxis) -> Option<(Vec3, Vec3)> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for t in &mesh.triangles {
        for &i in t {
            let p = up.to_canonical(mesh.vertices[i as usize]);
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    (!mesh.triangles.is_empty()).then_some((lo, hi))
}

/// Voxels touched by a canonical-frame triangle, in ascending linear order.
pub fn triangle_voxels(spec: &GridSpec, tri: [Vec3; 3], normal: Vec3, out: &mut Vec<usize>) {
    let vs = spec.voxel_size;
    let mut range = [(0usize, 0usize); 3];
    for a in 0..3 {
        let lo = tri[0][a].min(tri[1][a]).min(tri[2][a]);
        let hi = tri[0][a].max(tri[1][a]).max(tri[2][a]);
        // widen by a hair so faces lying exactly on voxel boundaries reach
        // both neighbours; the exact test below decides
        let i0 = ((lo - spec.origin[a]) / vs - 1e-7).floor() as i64;
        let i1 = ((hi - spec.origin[a]) / vs + 1e-7).floor() as i64;
        let i0 = i0.max(0);
        let i1 = i1.min(spec.dims[a] as i64 - 1);
        if i0 > i1 {
            return;
        }
        range[a] = (i0 as usize, i1 as usize);
    }
    for k in range[2].0..=range[2].1 {
        for j in range[1].0..=range[1].1 {
            for i in range[0].0..=range[0].1 {
                let (bmin, bmax) = spec.voxel_bounds([i, j, k]);
                if overlaps(tri, normal, bmin, bmax) {
                    out.push(spec.linear([i, j, k]));
                }
            }
        }
    }
}

/// Voxelizes a mesh: conservative occupancy plus majority normal vote.
pub fn voxelize(mesh: &TriangleMesh, req: &VoxelizeRequest) -> Result<VoxelGrid> {
    if mesh.is_empty() {
        return Err(Error::InvalidArgument("mesh has no triangles".into()));
    }
    let spec = match req.fixed {
        Some(spec) => {
            spec.validate()?;
            spec
        }
        None => {
            let (lo, hi) = canonical_bounds(mesh, req.up_axis).expect("non-empty mesh");
            fit_grid(lo, hi, req.voxel_size, req.padding, req.up_axis, req.cell_cap)?
        }
    };
    if spec.len() as u128 > req.cell_cap {
        return Err(Error::GridTooLarge {
            cells: spec.len() as u128,
            cap: req.cell_cap,
        });
    }
    let up = spec.up_axis;
    let cos_half = req.cone.half_angle_deg.to_radians().cos();

    // (voxel << 2 | state) keys; sorting groups the votes of each voxel
    let mut keys: Vec<u64> = par::flat_map_chunks(mesh.triangles.len(), 1024, |range| {
        let mut out = Vec::new();
        let mut hits = Vec::new();
        for t in range {
            let state = classify_unit(mesh.face_normals[t], up.vector(), cos_half);
            let [a, b, c] = mesh.triangle(t);
            let tri = [up.to_canonical(a), up.to_canonical(b), up.to_canonical(c)];
            let n = up.to_canonical(mesh.face_normals[t]);
            hits.clear();
            triangle_voxels(&spec, tri, n, &mut hits);
            out.extend(hits.iter().map(|&v| (v as u64) << 2 | state as u64));
        }
        out
    });
    sort_keys(&mut keys);

    let mut grid = VoxelGrid::new(spec);
    let mut i = 0;
    while i < keys.len() {
        let voxel = (keys[i] >> 2) as usize;
        let mut votes = [0u32; 4];
        while i < keys.len() && (keys[i] >> 2) as usize == voxel {
            votes[(keys[i] & 3) as usize] += 1;
            i += 1;
        }
        grid.cells[voxel] = majority(votes);
    }
    Ok(grid)
}

fn majority(votes: [u32; 4]) -> NormalState {
    let up = votes[NormalState::NormalUp as usize];
    let down = votes[NormalState::NormalDown as usize];
    let horiz = votes[NormalState::NormalHorizontal as usize];
    if horiz >= down && horiz >= up {
        NormalState::NormalHorizontal
    } else if down >= up {
        NormalState::NormalDown
    } else {
        NormalState::NormalUp
    }
}

fn sort_keys(keys: &mut [u64]) {
    #[cfg(feature = "parallel")]
    if par::is_parallel() {
        use rayon::slice::ParallelSliceMut;
        keys.par_sort_unstable();
        return;
    }
    keys.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn normal_classes() {
        let up = UpAxis::default();
        let cone = NormalCone::default();
        assert_eq!(classify_normal([0.0, 0.0, 1.0], up, cone).unwrap(), NormalState::NormalUp);
        assert_eq!(classify_normal([0.0, 0.0, -1.0], up, cone).unwrap(), NormalState::NormalDown);
        assert_eq!(
            classify_normal([1.0, 0.0, 0.0], up, cone).unwrap(),
            NormalState::NormalHorizontal
        );
        assert_eq!(classify_normal([S, 0.0, S], up, cone).unwrap(), NormalState::NormalUp);
        assert_eq!(classify_normal([0.0, S, -S], up, cone).unwrap(), NormalState::NormalDown);
        assert!(classify_normal([0.0, 0.0, 2.0], up, cone).is_err());
    }

    #[test]
    fn normal_classes_follow_up_axis() {
        let up: UpAxis = "-y".parse().unwrap();
        let cone = NormalCone::default();
        assert_eq!(classify_normal([0.0, -1.0, 0.0], up, cone).unwrap(), NormalState::NormalUp);
        assert_eq!(
            classify_normal([0.0, 0.0, 1.0], up, cone).unwrap(),
            NormalState::NormalHorizontal
        );
    }

    #[test]
    fn cone_validation() {
        assert!(NormalCone::new(0.0).is_err());
        assert!(NormalCone::new(90.0).is_err());
        assert!(NormalCone::new(30.0).is_ok());
    }

    #[test]
    fn sat_cases() {
        let lo = [0.0; 3];
        let hi = [1.0; 3];
        let inside = [[0.2, 0.2, 0.5], [0.8, 0.2, 0.5], [0.2, 0.8, 0.5]];
        assert!(triangle_overlaps_voxel(inside, lo, hi).unwrap());
        let far = [[-5.0, -5.0, 2.0], [5.0, -5.0, 2.0], [0.0, 5.0, 2.0]];
        assert!(!triangle_overlaps_voxel(far, lo, hi).unwrap());
        let corner = [[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 2.0, 2.0]];
        assert!(triangle_overlaps_voxel(corner, lo, hi).unwrap());
        // crosses the box's corner region diagonally without touching it
        let miss = [[1.2, 0.0, 0.5], [2.0, 0.0, 0.5], [2.0, 1.0, 0.5]];
        assert!(!triangle_overlaps_voxel(miss, lo, hi).unwrap());
        // large triangle whose plane slices the box, vertices all outside
        let big = [[-10.0, -10.0, 0.5], [10.0, -10.0, 0.5], [0.0, 10.0, 0.5]];
        assert!(triangle_overlaps_voxel(big, lo, hi).unwrap());
        // only an edge cross product separates: the bounding boxes overlap
        // and the plane slices the box
        let edge_sep = [[0.5, 1.6, 0.5], [1.6, 0.5, 0.5], [1.6, 1.6, 0.5]];
        assert!(!triangle_overlaps_voxel(edge_sep, lo, hi).unwrap());
        let degenerate = [[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(triangle_overlaps_voxel(degenerate, lo, hi).is_err());
    }

    #[test]
    fn majority_ties() {
        assert_eq!(majority([0, 1, 0, 2]), NormalState::NormalHorizontal);
        assert_eq!(majority([0, 1, 1, 1]), NormalState::NormalHorizontal);
        assert_eq!(majority([0, 1, 1, 0]), NormalState::NormalDown);
        assert_eq!(majority([0, 2, 1, 0]), NormalState::NormalUp);
    }

    #[test]
    fn single_triangle_fills_one_voxel() {
        let mesh = TriangleMesh::from_indexed(
            vec![[0.01, 0.01, 0.02], [0.04, 0.01, 0.02], [0.01, 0.04, 0.02]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let spec = GridSpec::new([0.0; 3], 0.05, [3, 3, 3], UpAxis::default()).unwrap();
        let req = VoxelizeRequest {
            fixed: Some(spec),
            ..Default::default()
        };
        let g = voxelize(&mesh, &req).unwrap();
        assert_eq!(g.count_non_empty(), 1);
        assert_eq!(g.at([0, 0, 0]), NormalState::NormalUp);
    }

    #[test]
    fn fitted_grid_centers_the_min_corner() {
        let spec = fit_grid([0.0; 3], [4.0, 5.0, 2.5], 0.05, 2, UpAxis::default(), DEFAULT_CELL_CAP)
            .unwrap();
        assert_eq!(spec.dims, [85, 105, 55]);
        assert_eq!(spec.world_to_grid([0.0, 0.0, 0.0]), [2, 2, 2]);
        assert_eq!(spec.world_to_grid([4.0, 5.0, 2.5]), [82, 102, 52]);
        assert!(fit_grid([0.0; 3], [100.0; 3], 0.01, 2, UpAxis::default(), DEFAULT_CELL_CAP).is_err());
    }
}
