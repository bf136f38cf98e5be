//! Voxel-wise comparison of a reconstruction against labeled ground truth.
//!
//! Both models live on one grid. Ground-truth meshes are voxelized per class
//! (occupancy only), rooms are matched through voxels labeled Ceiling in
//! both models, and a voxel counts as correct only when its complete set of
//! (room, classes) assignments agrees.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, UpAxis, Vec3};
use crate::labels::{ClassSet, LabeledVoxelGrid, RoomId, SemanticClass};
use crate::mesh_io::{LabeledMeshSet, TriangleMesh};
use crate::par;
use crate::voxelizer::{canonical_bounds, fit_grid, triangle_voxels};

/// Default share of a ground-truth room's ceiling voxels below which a room
/// correspondence is discarded.
pub const NEGLIGIBLE_FRACTION: f64 = 0.05;

const CHUNK: usize = 1 << 15;

fn union_bounds(a: Option<(Vec3, Vec3)>, b: Option<(Vec3, Vec3)>) -> Option<(Vec3, Vec3)> {
    match (a, b) {
        (Some((lo, hi)), Some((l2, h2))) => Some((
            std::array::from_fn(|i| lo[i].min(l2[i])),
            std::array::from_fn(|i| hi[i].max(h2[i])),
        )),
        (x, None) | (None, x) => x,
    }
}

fn set_bounds(set: &LabeledMeshSet, up: UpAxis) -> Option<(Vec3, Vec3)> {
    set.rooms
        .values()
        .flat_map(|m| m.values())
        .fold(None, |acc, m| union_bounds(acc, canonical_bounds(m, up)))
}

/// Grid enclosing both the test mesh and every ground-truth mesh.
pub fn shared_grid_spec(
    mesh: &TriangleMesh,
    set: &LabeledMeshSet,
    voxel_size: f64,
    padding: usize,
    up: UpAxis,
    cell_cap: u128,
) -> Result<GridSpec> {
    let (lo, hi) = union_bounds(canonical_bounds(mesh, up), set_bounds(set, up))
        .ok_or_else(|| Error::Evaluation("nothing to evaluate: all meshes are empty".into()))?;
    fit_grid(lo, hi, voxel_size, padding, up, cell_cap)
}

/// Merge rule for the classes one room's ground-truth meshes leave in a
/// voxel: Wall wins over WallOpening, and an opening voxel that also
/// carries Ceiling or Floor becomes Wall so it matches the dual labels the
/// reconstruction produces.
pub fn normalize_gt_classes(mut classes: ClassSet) -> ClassSet {
    use SemanticClass::*;
    if classes.contains(WallOpening)
        && (classes.contains(Wall) || classes.contains(Ceiling) || classes.contains(Floor))
    {
        classes.remove(WallOpening);
        classes.insert(Wall);
    }
    classes
}

/// Voxelizes ground-truth meshes on `spec`, merging classes per room with
/// [`normalize_gt_classes`].
pub fn voxelize_ground_truth(set: &LabeledMeshSet, spec: &GridSpec) -> Result<LabeledVoxelGrid> {
    let (glo, ghi) = spec.bounds();
    let tol = spec.voxel_size * 1e-6;
    let mut jobs: Vec<(u32, SemanticClass, &TriangleMesh)> = Vec::new();
    for (&room, classes) in &set.rooms {
        if room == u32::MAX {
            return Err(Error::GroundTruth(format!("room id {room} is reserved")));
        }
        for (&class, mesh) in classes {
            if let Some((lo, hi)) = canonical_bounds(mesh, spec.up_axis) {
                if (0..3).any(|a| lo[a] < glo[a] - tol || hi[a] > ghi[a] + tol) {
                    return Err(Error::GroundTruth(format!(
                        "room {room} {} mesh lies outside the grid bounds",
                        class.file_stem()
                    )));
                }
            }
            jobs.push((room, class, mesh));
        }
    }
    let hits: Vec<Vec<(usize, u32, u8)>> = par::map(&jobs, |&(room, class, mesh)| {
        let mut out = Vec::new();
        let mut buf = Vec::new();
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangle(t);
            let up = spec.up_axis;
            let tri = [up.to_canonical(a), up.to_canonical(b), up.to_canonical(c)];
            buf.clear();
            triangle_voxels(spec, tri, up.to_canonical(mesh.face_normals[t]), &mut buf);
            out.extend(buf.iter().map(|&v| (v, room, class.bit())));
        }
        out
    });
    let mut merged: BTreeMap<(usize, u32), u8> = BTreeMap::new();
    for (v, room, bit) in hits.into_iter().flatten() {
        *merged.entry((v, room)).or_default() |= bit;
    }
    let mut gt = LabeledVoxelGrid::new(*spec);
    for ((v, room), bits) in merged {
        gt.add(v, RoomId(room), normalize_gt_classes(ClassSet(bits)));
    }
    Ok(gt)
}

/// Weighted correspondence between ground-truth and reconstructed rooms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoomMapping {
    /// (gt room, rc room) -> voxels labeled Ceiling for both.
    pub weights: BTreeMap<(RoomId, RoomId), u64>,
    pub accepted: BTreeSet<(RoomId, RoomId)>,
    /// Ceiling voxel count of every ground-truth room.
    pub gt_ceiling: BTreeMap<RoomId, u64>,
}

impl RoomMapping {
    /// Ground-truth rooms with several accepted partners.
    pub fn over_segmented(&self) -> BTreeSet<RoomId> {
        self.partner_counts(|&(g, _)| g)
    }

    /// Reconstructed rooms that absorb several ground-truth rooms.
    pub fn under_segmented(&self) -> BTreeSet<RoomId> {
        self.partner_counts(|&(_, r)| r)
    }

    fn partner_counts(&self, key: impl Fn(&(RoomId, RoomId)) -> RoomId) -> BTreeSet<RoomId> {
        let mut counts: BTreeMap<RoomId, usize> = BTreeMap::new();
        for p in &self.accepted {
            *counts.entry(key(p)).or_default() += 1;
        }
        counts.into_iter().filter(|&(_, c)| c > 1).map(|(r, _)| r).collect()
    }

    /// Ground-truth rooms without exactly one accepted partner that is
    /// itself matched only to them.
    pub fn wrong_gt_rooms(&self) -> BTreeSet<RoomId> {
        let under = self.under_segmented();
        self.gt_ceiling
            .keys()
            .copied()
            .filter(|&g| {
                let partners: Vec<RoomId> = self
                    .accepted
                    .iter()
                    .filter(|p| p.0 == g)
                    .map(|p| p.1)
                    .collect();
                partners.len() != 1 || under.contains(&partners[0])
            })
            .collect()
    }
}

fn check_specs(gt: &LabeledVoxelGrid, rc: &LabeledVoxelGrid) -> Result<()> {
    if gt.spec != rc.spec {
        return Err(Error::Evaluation(format!(
            "grid mismatch: ground truth {:?} vs reconstruction {:?}",
            gt.spec, rc.spec
        )));
    }
    Ok(())
}

/// Builds the room mapping from co-classified Ceiling voxels.
pub fn map_rooms(gt: &LabeledVoxelGrid, rc: &LabeledVoxelGrid, negligible_fraction: f64) -> Result<RoomMapping> {
    check_specs(gt, rc)?;
    type Acc = (BTreeMap<(RoomId, RoomId), u64>, BTreeMap<RoomId, u64>);
    let (weights, gt_ceiling) = par::reduce_chunks(
        gt.len(),
        CHUNK,
        Acc::default(),
        |range| {
            let mut acc = Acc::default();
            for v in range {
                if !gt.is_assigned(v) {
                    continue;
                }
                for g in gt.assignments(v).filter(|a| a.classes.contains(SemanticClass::Ceiling)) {
                    *acc.1.entry(g.room).or_default() += 1;
                    for r in rc.assignments(v).filter(|a| a.classes.contains(SemanticClass::Ceiling)) {
                        *acc.0.entry((g.room, r.room)).or_default() += 1;
                    }
                }
            }
            acc
        },
        |mut a, b| {
            for (k, w) in b.0 {
                *a.0.entry(k).or_default() += w;
            }
            for (k, w) in b.1 {
                *a.1.entry(k).or_default() += w;
            }
            a
        },
    );
    let mut gt_ceiling = gt_ceiling;
    for room in gt.room_ids() {
        gt_ceiling.entry(room).or_insert(0);
    }
    let accepted = weights
        .iter()
        .filter(|&(&(g, _), &w)| w > 0 && w as f64 >= negligible_fraction * gt_ceiling[&g] as f64)
        .map(|(&k, _)| k)
        .collect();
    Ok(RoomMapping {
        weights,
        accepted,
        gt_ceiling,
    })
}

/// Correctness metrics. Percentages with an empty denominator are 100.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    /// Vertex count of the evaluated input mesh (0 when unknown).
    pub mesh_vertices: usize,
    pub total_voxels: usize,
    /// Non-empty reconstructed voxels (interior classes stripped) over all voxels.
    pub ne_in_rc_pct: f64,
    pub rooms_gt: usize,
    pub rooms_rc: usize,
    pub wrong_rooms_from_gt: usize,
    /// Correct voxels over all grid voxels, padding included.
    pub correct_vx_pct: f64,
    /// Correct voxels among those non-empty in the reconstruction.
    pub correct_in_rc_ne_pct: f64,
    /// Correct voxels among those non-empty in both models.
    pub correct_in_gt_and_rc_ne_pct: f64,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Key of a reconstructed room after translation: matched rooms take their
/// ground-truth id, unmatched ones get ids no ground-truth room can have.
fn translation(mapping: &RoomMapping) -> BTreeMap<RoomId, u64> {
    let mut best: BTreeMap<RoomId, (u64, RoomId)> = BTreeMap::new();
    for &(g, r) in &mapping.accepted {
        let w = mapping.weights[&(g, r)];
        best.entry(r)
            .and_modify(|e| {
                if w > e.0 || (w == e.0 && g < e.1) {
                    *e = (w, g);
                }
            })
            .or_insert((w, g));
    }
    best.into_iter().map(|(r, (_, g))| (r, g.0 as u64)).collect()
}

#[derive(Clone, Copy, Default)]
struct Counts {
    correct: usize,
    rc_ne: usize,
    correct_rc_ne: usize,
    both_ne: usize,
    correct_both_ne: usize,
}

/// Compares two models voxel by voxel under `mapping`.
pub fn compare(gt: &LabeledVoxelGrid, rc: &LabeledVoxelGrid, mapping: &RoomMapping) -> Result<EvalReport> {
    check_specs(gt, rc)?;
    let gt_rooms = gt.room_ids();
    let rc_rooms = rc.room_ids();
    for &(g, r) in &mapping.accepted {
        if gt_rooms.binary_search(&g).is_err() || rc_rooms.binary_search(&r).is_err() {
            return Err(Error::Evaluation(format!(
                "mapping pair ({g}, {r}) references an unknown room"
            )));
        }
    }
    let trans = translation(mapping);
    let key = |r: RoomId| trans.get(&r).copied().unwrap_or((1 << 32) | r.0 as u64);
    let counts = par::reduce_chunks(
        gt.len(),
        CHUNK,
        Counts::default(),
        |range| {
            let mut c = Counts::default();
            let mut want: Vec<(u64, ClassSet)> = Vec::new();
            let mut got: Vec<(u64, ClassSet)> = Vec::new();
            for v in range {
                want.clear();
                got.clear();
                want.extend(gt.assignments(v).map(|a| (a.room.0 as u64, a.classes)));
                got.extend(rc.assignments(v).filter_map(|a| {
                    let classes = a.classes.without(ClassSet::INTERIOR);
                    (!classes.is_empty()).then(|| (key(a.room), classes))
                }));
                got.sort_unstable_by_key(|e| (e.0, e.1 .0));
                let ok = want == got;
                c.correct += ok as usize;
                if !got.is_empty() {
                    c.rc_ne += 1;
                    c.correct_rc_ne += ok as usize;
                    if !want.is_empty() {
                        c.both_ne += 1;
                        c.correct_both_ne += ok as usize;
                    }
                }
            }
            c
        },
        |a, b| Counts {
            correct: a.correct + b.correct,
            rc_ne: a.rc_ne + b.rc_ne,
            correct_rc_ne: a.correct_rc_ne + b.correct_rc_ne,
            both_ne: a.both_ne + b.both_ne,
            correct_both_ne: a.correct_both_ne + b.correct_both_ne,
        },
    );
    let total = gt.len();
    Ok(EvalReport {
        mesh_vertices: 0,
        total_voxels: total,
        ne_in_rc_pct: pct(counts.rc_ne, total),
        rooms_gt: gt_rooms.len(),
        rooms_rc: rc_rooms.len(),
        wrong_rooms_from_gt: mapping.wrong_gt_rooms().len(),
        correct_vx_pct: pct(counts.correct, total),
        correct_in_rc_ne_pct: pct(counts.correct_rc_ne, counts.rc_ne),
        correct_in_gt_and_rc_ne_pct: pct(counts.correct_both_ne, counts.both_ne),
    })
}

/// Ground-truth voxelization, mapping and comparison in one call.
pub fn evaluate(rc: &LabeledVoxelGrid, set: &LabeledMeshSet) -> Result<(EvalReport, RoomMapping)> {
    let gt = voxelize_ground_truth(set, &rc.spec)?;
    let mapping = map_rooms(&gt, rc, NEGLIGIBLE_FRACTION)?;
    let report = compare(&gt, rc, &mapping)?;
    Ok((report, mapping))
}

#[cfg(test)]
mod tests {
    use super::*;
    use SemanticClass::*;

    fn spec() -> GridSpec {
        GridSpec::new([0.0; 3], 1.0, [10, 10, 10], UpAxis::PLUS_Z).unwrap()
    }

    /// Ground truth with one room: a 10×10 ceiling plate at z=9 and floor at z=0.
    fn plates(room: u32) -> LabeledVoxelGrid {
        let s = spec();
        let mut g = LabeledVoxelGrid::new(s);
        for x in 0..10 {
            for y in 0..10 {
                g.add(s.linear([x, y, 9]), RoomId(room), ClassSet::single(Ceiling));
                g.add(s.linear([x, y, 0]), RoomId(room), ClassSet::single(Floor));
            }
        }
        g
    }

    #[test]
    fn self_comparison_is_perfect() {
        let g = plates(1);
        let m = map_rooms(&g, &g, NEGLIGIBLE_FRACTION).unwrap();
        assert_eq!(m.weights[&(RoomId(1), RoomId(1))], 100);
        let r = compare(&g, &g, &m).unwrap();
        assert_eq!(r.correct_vx_pct, 100.0);
        assert_eq!(r.correct_in_rc_ne_pct, 100.0);
        assert_eq!(r.correct_in_gt_and_rc_ne_pct, 100.0);
        assert_eq!(r.wrong_rooms_from_gt, 0);
        assert_eq!(r.total_voxels, 1000);
        assert_eq!(r.ne_in_rc_pct, 20.0);
    }

    #[test]
    fn permuted_ids_are_absorbed() {
        let g = plates(1);
        let rc = plates(7);
        let m = map_rooms(&g, &rc, NEGLIGIBLE_FRACTION).unwrap();
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.correct_vx_pct, 100.0);
    }

    #[test]
    fn split_room_counts_as_wrong() {
        let g = plates(1);
        let s = spec();
        let mut rc = plates(1);
        // 10% of the ceiling goes to room 2: accepted, so room 1 is over-segmented
        for y in 0..10 {
            let v = s.linear([0, y, 9]);
            rc.remove(v, RoomId(1));
            rc.add(v, RoomId(2), ClassSet::single(Ceiling));
        }
        let m = map_rooms(&g, &rc, NEGLIGIBLE_FRACTION).unwrap();
        assert_eq!(m.accepted.len(), 2);
        assert!(m.over_segmented().contains(&RoomId(1)));
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.wrong_rooms_from_gt, 1);
        // room 2 translates to gt room 1, so the relabeled voxels still match
        assert_eq!(r.correct_vx_pct, 100.0);

        // a single stray voxel stays below the threshold
        let mut rc = plates(1);
        let v = s.linear([0, 0, 9]);
        rc.remove(v, RoomId(1));
        rc.add(v, RoomId(2), ClassSet::single(Ceiling));
        let m = map_rooms(&g, &rc, NEGLIGIBLE_FRACTION).unwrap();
        assert_eq!(m.accepted.len(), 1);
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.wrong_rooms_from_gt, 0);
        assert_eq!(r.correct_in_gt_and_rc_ne_pct, 199.0 / 200.0 * 100.0);
    }

    #[test]
    fn extra_assignment_makes_voxel_wrong() {
        let g = plates(1);
        let mut rc = plates(1);
        rc.add(spec().linear([3, 3, 0]), RoomId(9), ClassSet::single(Wall));
        let m = map_rooms(&g, &rc, NEGLIGIBLE_FRACTION).unwrap();
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.correct_vx_pct, 99.9);
        // interior classes are ignored
        let mut rc = plates(1);
        rc.add(spec().linear([3, 3, 4]), RoomId(1), ClassSet::single(EmptyInterior));
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.correct_vx_pct, 100.0);
    }

    #[test]
    fn merged_rooms_are_wrong() {
        let s = spec();
        let mut g = LabeledVoxelGrid::new(s);
        let mut rc = LabeledVoxelGrid::new(s);
        for x in 0..10 {
            for y in 0..10 {
                let v = s.linear([x, y, 9]);
                g.add(v, RoomId(if x < 5 { 1 } else { 2 }), ClassSet::single(Ceiling));
                rc.add(v, RoomId(1), ClassSet::single(Ceiling));
            }
        }
        let m = map_rooms(&g, &rc, NEGLIGIBLE_FRACTION).unwrap();
        assert_eq!(m.under_segmented().len(), 1);
        let r = compare(&g, &rc, &m).unwrap();
        assert_eq!(r.wrong_rooms_from_gt, 2);
    }

    #[test]
    fn mismatched_grids_and_unknown_rooms_fail() {
        let g = plates(1);
        let other = LabeledVoxelGrid::new(GridSpec::new([0.0; 3], 0.5, [10, 10, 10], UpAxis::PLUS_Z).unwrap());
        assert!(map_rooms(&g, &other, 0.05).is_err());
        let mut m = map_rooms(&g, &g, 0.05).unwrap();
        m.accepted.insert((RoomId(5), RoomId(1)));
        m.weights.insert((RoomId(5), RoomId(1)), 1);
        assert!(compare(&g, &g, &m).is_err());
    }

    fn quad(p: [Vec3; 4]) -> TriangleMesh {
        TriangleMesh::from_indexed(p.to_vec(), vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn ground_truth_conflicts() {
        let s = spec();
        let wall = quad([[2.5, 2.5, 2.5], [2.5, 6.5, 2.5], [2.5, 6.5, 6.5], [2.5, 2.5, 6.5]]);
        let opening = quad([[2.5, 4.5, 2.5], [2.5, 8.5, 2.5], [2.5, 8.5, 6.5], [2.5, 4.5, 6.5]]);
        let ceiling = quad([[0.5, 0.5, 6.5], [9.0, 0.5, 6.5], [9.0, 9.0, 6.5], [0.5, 9.0, 6.5]]);
        let mut set = LabeledMeshSet::default();
        set.rooms.insert(
            1,
            BTreeMap::from([(Wall, wall), (WallOpening, opening), (Ceiling, ceiling.clone())]),
        );
        set.rooms.insert(2, BTreeMap::from([(Floor, ceiling)]));
        let gt = voxelize_ground_truth(&set, &s).unwrap();
        let at = |p: [usize; 3], r| gt.classes(s.linear(p), RoomId(r));
        assert_eq!(at([2, 5, 4], 1), ClassSet::single(Wall));
        assert_eq!(at([2, 7, 4], 1), ClassSet::single(WallOpening));
        assert_eq!(at([2, 7, 6], 1), ClassSet::of(&[Ceiling, Wall]));
        assert_eq!(at([5, 5, 6], 1), ClassSet::single(Ceiling));
        assert_eq!(at([5, 5, 6], 2), ClassSet::single(Floor));
        assert!(at([5, 5, 5], 1).is_empty());

        let far = quad([[0.5, 0.5, 12.0], [9.0, 0.5, 12.0], [9.0, 9.0, 12.0], [0.5, 9.0, 12.0]]);
        set.rooms.insert(3, BTreeMap::from([(Ceiling, far)]));
        assert!(voxelize_ground_truth(&set, &s).is_err());
    }
}
