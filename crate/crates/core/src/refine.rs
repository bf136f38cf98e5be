//! Wall refinement: interior-facing wall normals, completion of missing
//! walls at height discontinuities, wall thickening and wall-opening
//! refinement.
//!
//! Every pass reads a snapshot of the labeled grid and applies its changes at
//! the end, so results do not depend on traversal order. Wall assignments
//! added or converted by thickening carry [`FLAG_THICKENED`] and are never
//! used as seeds, which makes the whole stage idempotent.

use std::collections::{BTreeMap, HashMap};

use crate::grid::{metric_to_voxels, GridSpec, VoxelGrid, N26_OFFSETS};
use crate::labels::{
    Assignment, ClassSet, Dir, DirSet, LabeledVoxelGrid, RoomId, SemanticClass, FLAG_THICKENED,
};
use crate::par;
use crate::room_detect::ReconstructionConfig;

const CHUNK: usize = 1 << 14;

#[inline]
fn step(spec: &GridSpec, v: usize, d: [i64; 3]) -> Option<usize> {
    spec.offset(spec.unlinear(v), d).map(|i| spec.linear(i))
}

#[inline]
fn dir_step(spec: &GridSpec, v: usize, d: Dir) -> Option<usize> {
    step(spec, v, d.step())
}

#[inline]
fn interior_of(l: &LabeledVoxelGrid, v: usize, room: RoomId) -> bool {
    l.get(v, room).is_some_and(|a| a.classes.is_interior())
}

/// Counters reported by the refinement stage.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct RefineDiagnostics {
    /// Wall assignments for which no interior direction could be found.
    pub normal_less: usize,
    pub walls_completed: usize,
    pub surfaces_completed: usize,
    pub thickened_outward: usize,
    pub thickened_inward: usize,
    pub openings_closed_by_stack: usize,
    pub openings_closed_by_occlusion: usize,
}

/// Fills the interior-facing normal set of every wall assignment that has
/// none yet. Returns the number of assignments left without normals.
///
/// Directions come from same-room interior 4-neighbours at the voxel's own
/// height, else one voxel above or below, else from the nearest same-room
/// wall voxels in the 26-neighbourhood.
pub fn compute_wall_normals(labeled: &mut LabeledVoxelGrid) -> usize {
    let spec = labeled.spec;
    let len = labeled.len();
    let lab = &*labeled;
    let direct: Vec<(usize, RoomId, DirSet)> = par::flat_map_chunks(len, CHUNK, |range| {
        let mut out = Vec::new();
        for v in range {
            if !lab.is_assigned(v) {
                continue;
            }
            for a in lab.assignments(v) {
                if !a.classes.is_wallish() || !a.normals.is_empty() {
                    continue;
                }
                let at = |base: usize| -> DirSet {
                    Dir::ALL
                        .into_iter()
                        .filter(|&d| dir_step(&spec, base, d).is_some_and(|n| interior_of(lab, n, a.room)))
                        .collect()
                };
                let mut dirs = at(v);
                if dirs.is_empty() {
                    for dz in [1, -1] {
                        if let Some(u) = step(&spec, v, [0, 0, dz]) {
                            dirs = dirs.union(at(u));
                        }
                    }
                }
                out.push((v, a.room, dirs));
            }
        }
        out
    });
    for &(v, room, dirs) in &direct {
        if let Some(a) = labeled.get_mut(v, room) {
            a.normals = dirs;
        }
    }
    let lab = &*labeled;
    let missing: Vec<(usize, RoomId)> = direct
        .iter()
        .filter(|(_, _, d)| d.is_empty())
        .map(|&(v, r, _)| (v, r))
        .collect();
    let borrowed: Vec<(usize, RoomId, DirSet)> = par::map(&missing, |&(v, room)| {
        let mut best = i64::MAX;
        let mut dirs = DirSet::EMPTY;
        for d in N26_OFFSETS {
            let Some(n) = step(&spec, v, d) else { continue };
            let Some(a) = lab.get(n, room) else { continue };
            if !a.classes.is_wallish() || a.normals.is_empty() {
                continue;
            }
            let dist = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if dist < best {
                best = dist;
                dirs = a.normals;
            } else if dist == best {
                dirs = dirs.union(a.normals);
            }
        }
        (v, room, dirs)
    });
    let mut normal_less = 0;
    for (v, room, dirs) in borrowed {
        if dirs.is_empty() {
            normal_less += 1;
        } else if let Some(a) = labeled.get_mut(v, room) {
            a.normals = dirs;
        }
    }
    normal_less
}

/// Vertical extent of each room in each column, from the labeled grid.
fn column_extents(labeled: &LabeledVoxelGrid) -> HashMap<(RoomId, usize), (usize, usize)> {
    let spec = labeled.spec;
    let n = spec.section_len();
    let parts = par::map_range(0..n.div_ceil(CHUNK), |c| {
        let mut map: HashMap<(RoomId, usize), (usize, usize)> = HashMap::new();
        for col in c * CHUNK..((c + 1) * CHUNK).min(n) {
            for z in 0..spec.dims[2] {
                let v = col + z * n;
                if !labeled.is_assigned(v) {
                    continue;
                }
                for a in labeled.assignments(v) {
                    map.entry((a.room, col))
                        .and_modify(|e| e.1 = z)
                        .or_insert((z, z));
                }
            }
        }
        map
    });
    let mut out = HashMap::new();
    for p in parts {
        out.extend(p);
    }
    out
}

/// Converts interior voxels that border a column position their room does
/// not cover at that height. Across a height jump larger than the step
/// threshold they become wall (or wall opening where the input is empty);
/// across a small step they become floor or ceiling.
pub fn complete_missing_walls(
    labeled: &mut LabeledVoxelGrid,
    grid: &VoxelGrid,
    cfg: &ReconstructionConfig,
) -> (usize, usize) {
    use SemanticClass::*;
    let spec = labeled.spec;
    let step_vox = metric_to_voxels(cfg.max_step_height, spec.voxel_size);
    let extents = column_extents(labeled);
    let n = spec.section_len();
    let lab = &*labeled;
    let updates: Vec<(usize, RoomId, ClassSet, DirSet)> = par::flat_map_chunks(lab.len(), CHUNK, |range| {
        let mut out = Vec::new();
        for v in range {
            if !lab.is_assigned(v) {
                continue;
            }
            for a in lab.assignments(v) {
                if !a.classes.is_interior() {
                    continue;
                }
                let z = v / n;
                let own = extents[&(a.room, v % n)];
                let mut wall_dirs = DirSet::EMPTY;
                let mut floor_level = false;
                let mut ceiling_level = false;
                for d in Dir::ALL {
                    let q = dir_step(&spec, v, d);
                    if q.is_some_and(|q| lab.get(q, a.room).is_some()) {
                        continue;
                    }
                    let jump = q.and_then(|q| extents.get(&(a.room, q % n))).map(|&(lo, hi)| {
                        if z < lo {
                            (lo - own.0, true)
                        } else if z > hi {
                            (own.1 - hi, false)
                        } else {
                            (usize::MAX, true)
                        }
                    });
                    match jump {
                        Some((delta, at_floor)) if delta <= step_vox => {
                            if at_floor {
                                floor_level = true;
                            } else {
                                ceiling_level = true;
                            }
                        }
                        _ => wall_dirs.insert(d.reverse()),
                    }
                }
                let classes = if !wall_dirs.is_empty() {
                    ClassSet::single(if grid.cells[v].is_empty() { WallOpening } else { Wall })
                } else if floor_level {
                    ClassSet::single(Floor)
                } else if ceiling_level {
                    ClassSet::single(Ceiling)
                } else {
                    continue;
                };
                out.push((v, a.room, classes, wall_dirs));
            }
        }
        out
    });
    let mut walls = 0;
    let mut surfaces = 0;
    for (v, room, classes, normals) in updates {
        if classes.is_wallish() {
            walls += 1;
        } else {
            surfaces += 1;
        }
        let a = labeled.entry(v, room);
        a.classes = classes;
        a.normals = normals;
    }
    (walls, surfaces)
}

/// Seeds for thickening and stacks: wall assignments that were not created
/// by thickening and have normals.
fn seed_walls(labeled: &LabeledVoxelGrid) -> Vec<(usize, Assignment)> {
    par::flat_map_chunks(labeled.len(), CHUNK, |range| {
        let mut out = Vec::new();
        for v in range {
            if !labeled.is_assigned(v) {
                continue;
            }
            for a in labeled.assignments(v) {
                if a.classes.is_wallish() && a.flags & FLAG_THICKENED == 0 && !a.normals.is_empty() {
                    out.push((v, *a));
                }
            }
        }
        out
    })
}

/// Outward: unassigned non-empty voxels up to `wall_search_out` behind a
/// wall join it (empty ones in between as wall opening). Inward: a run of
/// interior-object voxels in front of a wall that ends within
/// `wall_search_in` joins the wall.
pub fn thicken_walls(
    labeled: &mut LabeledVoxelGrid,
    grid: &VoxelGrid,
    cfg: &ReconstructionConfig,
) -> (usize, usize) {
    use SemanticClass::*;
    let spec = labeled.spec;
    let n_out = metric_to_voxels(cfg.wall_search_out, spec.voxel_size);
    let n_in = metric_to_voxels(cfg.wall_search_in, spec.voxel_size);
    let seeds = seed_walls(labeled);
    let lab = &*labeled;
    // (voxel, room) -> (classes, normals, outward?)
    let found: Vec<(usize, RoomId, ClassSet, DirSet, bool)> = par::flat_map_chunks(seeds.len(), 256, |range| {
        let mut out = Vec::new();
        for (v, a) in &seeds[range] {
            for d in a.normals.iter() {
                let back = d.reverse();
                let mut path = Vec::new();
                let mut farthest = 0;
                let mut cur = *v;
                for s in 1..=n_out {
                    let Some(q) = dir_step(&spec, cur, back) else { break };
                    if lab.is_assigned(q) {
                        break;
                    }
                    path.push(q);
                    if !grid.cells[q].is_empty() {
                        farthest = s;
                    }
                    cur = q;
                }
                for &q in &path[..farthest] {
                    let c = if grid.cells[q].is_empty() { WallOpening } else { Wall };
                    out.push((q, a.room, ClassSet::single(c), a.normals, true));
                }

                let mut run = Vec::new();
                let mut cur = *v;
                for _ in 0..=n_in {
                    let Some(q) = dir_step(&spec, cur, d) else { break };
                    match lab.get(q, a.room) {
                        Some(b) if b.classes == ClassSet::single(InteriorObject) => run.push(q),
                        _ => break,
                    }
                    cur = q;
                }
                if !run.is_empty() && run.len() <= n_in {
                    for q in run {
                        out.push((q, a.room, ClassSet::single(Wall), a.normals, false));
                    }
                }
            }
        }
        out
    });
    let mut merged: BTreeMap<(usize, RoomId), (ClassSet, DirSet, bool)> = BTreeMap::new();
    for (v, room, classes, normals, outward) in found {
        merged
            .entry((v, room))
            .and_modify(|e| {
                e.0 = e.0.union(classes);
                e.1 = e.1.union(normals);
            })
            .or_insert((classes, normals, outward));
    }
    let (mut outward_count, mut inward_count) = (0, 0);
    for ((v, room), (mut classes, normals, outward)) in merged {
        if classes.contains(Wall) {
            classes.remove(WallOpening);
        }
        if outward {
            outward_count += 1;
        } else {
            inward_count += 1;
        }
        let a = labeled.entry(v, room);
        a.classes = classes;
        a.normals = a.normals.union(normals);
        a.flags |= FLAG_THICKENED;
    }
    (outward_count, inward_count)
}

#[inline]
fn stack_member(l: &LabeledVoxelGrid, v: usize, room: RoomId, d: Dir) -> bool {
    l.get(v, room)
        .is_some_and(|a| a.classes.is_wallish() && a.normals.contains(d))
}

/// The contiguous run of same-room wall voxels facing `d` through `v`, along
/// the line of `d`.
pub fn wall_stack(l: &LabeledVoxelGrid, v: usize, room: RoomId, d: Dir) -> Vec<usize> {
    let spec = l.spec;
    let mut out = vec![v];
    for sense in [d, d.reverse()] {
        let mut cur = v;
        while let Some(q) = dir_step(&spec, cur, sense).filter(|&q| stack_member(l, q, room, d)) {
            out.push(q);
            cur = q;
        }
    }
    out.sort_unstable();
    out
}

/// Upgrades wall openings in stacks that also contain wall, until no stack
/// holds both. Returns the number of upgraded assignments.
fn close_mixed_stacks(labeled: &mut LabeledVoxelGrid) -> usize {
    use SemanticClass::*;
    let mut total = 0;
    loop {
        let seeds = seed_walls(labeled);
        let lab = &*labeled;
        let mut upgrades: Vec<(usize, RoomId)> = par::flat_map_chunks(seeds.len(), 256, |range| {
            let mut out = Vec::new();
            for (v, a) in &seeds[range] {
                for d in a.normals.iter() {
                    let stack = wall_stack(lab, *v, a.room, d);
                    let classes: Vec<ClassSet> = stack.iter().map(|&q| lab.classes(q, a.room)).collect();
                    if classes.iter().any(|c| c.contains(Wall)) && classes.iter().any(|c| c.contains(WallOpening)) {
                        out.extend(
                            stack
                                .iter()
                                .zip(&classes)
                                .filter(|(_, c)| c.contains(WallOpening))
                                .map(|(&q, _)| (q, a.room)),
                        );
                    }
                }
            }
            out
        });
        upgrades.sort_unstable();
        upgrades.dedup();
        if upgrades.is_empty() {
            return total;
        }
        total += upgrades.len();
        for (v, room) in upgrades {
            if let Some(a) = labeled.get_mut(v, room) {
                a.classes.remove(WallOpening);
                a.classes.insert(Wall);
            }
        }
    }
}

/// Length of the run of same-room interior-object voxels through `v` along
/// one axis.
fn object_run(l: &LabeledVoxelGrid, v: usize, room: RoomId, d: Dir) -> usize {
    let spec = l.spec;
    let is_obj = |q: usize| l.classes(q, room) == ClassSet::single(SemanticClass::InteriorObject);
    let mut len = 1;
    for sense in [d, d.reverse()] {
        let mut cur = v;
        while let Some(q) = dir_step(&spec, cur, sense).filter(|&q| is_obj(q)) {
            len += 1;
            cur = q;
        }
    }
    len
}

/// Stack rule, then occlusion rule: a wall opening whose inward view within
/// `occlusion_search` runs into a large object (an interior-object run longer
/// than `wall_search_in` along either horizontal axis) is closed to wall
/// together with its stack.
pub fn refine_openings(labeled: &mut LabeledVoxelGrid, cfg: &ReconstructionConfig) -> (usize, usize) {
    use SemanticClass::*;
    let spec = labeled.spec;
    let by_stack = close_mixed_stacks(labeled);
    let n_occ = metric_to_voxels(cfg.occlusion_search, spec.voxel_size);
    let n_in = metric_to_voxels(cfg.wall_search_in, spec.voxel_size);
    let lab = &*labeled;
    let mut closes: Vec<(usize, RoomId)> = par::flat_map_chunks(lab.len(), CHUNK, |range| {
        let mut out = Vec::new();
        for v in range {
            if !lab.is_assigned(v) {
                continue;
            }
            for a in lab.assignments(v) {
                if !a.classes.contains(WallOpening) {
                    continue;
                }
                for d in a.normals.iter() {
                    let mut cur = v;
                    let mut hit = false;
                    for _ in 0..n_occ {
                        let Some(q) = dir_step(&spec, cur, d) else { break };
                        let c = lab.classes(q, a.room);
                        if c == ClassSet::single(InteriorObject) {
                            if object_run(lab, q, a.room, Dir::PosX) > n_in
                                || object_run(lab, q, a.room, Dir::PosY) > n_in
                            {
                                hit = true;
                                break;
                            }
                        } else if c != ClassSet::single(EmptyInterior) {
                            break;
                        }
                        cur = q;
                    }
                    if hit {
                        out.extend(wall_stack(lab, v, a.room, d).into_iter().map(|q| (q, a.room)));
                    }
                }
            }
        }
        out
    });
    closes.sort_unstable();
    closes.dedup();
    let mut by_occlusion = 0;
    for (v, room) in closes {
        if let Some(a) = labeled.get_mut(v, room) {
            if a.classes.contains(WallOpening) {
                a.classes.remove(WallOpening);
                a.classes.insert(Wall);
                by_occlusion += 1;
            }
        }
    }
    let again = close_mixed_stacks(labeled);
    (by_stack + again, by_occlusion)
}

/// Full refinement stage in its fixed order.
pub fn refine(labeled: &mut LabeledVoxelGrid, grid: &VoxelGrid, cfg: &ReconstructionConfig) -> RefineDiagnostics {
    let mut diag = RefineDiagnostics::default();
    compute_wall_normals(labeled);
    let (w, s) = complete_missing_walls(labeled, grid, cfg);
    diag.walls_completed = w;
    diag.surfaces_completed = s;
    diag.normal_less = compute_wall_normals(labeled);
    if diag.normal_less > 0 {
        log::debug!("{} wall assignments without normals", diag.normal_less);
    }
    let (o, i) = thicken_walls(labeled, grid, cfg);
    diag.thickened_outward = o;
    diag.thickened_inward = i;
    let (st, oc) = refine_openings(labeled, cfg);
    diag.openings_closed_by_stack = st;
    diag.openings_closed_by_occlusion = oc;
    diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{NormalState, UpAxis};
    use SemanticClass::*;

    const R: RoomId = RoomId(1);

    fn setup(nx: usize) -> (VoxelGrid, LabeledVoxelGrid) {
        let spec = GridSpec::new([0.0; 3], 0.05, [nx, 3, 3], UpAxis::default()).unwrap();
        (VoxelGrid::new(spec), LabeledVoxelGrid::new(spec))
    }

    fn put(l: &mut LabeledVoxelGrid, x: usize, classes: &[SemanticClass], normals: &[Dir]) {
        let v = l.spec.linear([x, 1, 1]);
        l.put(
            v,
            Assignment {
                room: R,
                classes: ClassSet::of(classes),
                normals: normals.iter().copied().collect(),
                flags: 0,
            },
        );
    }

    fn at(l: &LabeledVoxelGrid, x: usize) -> ClassSet {
        l.classes(l.spec.linear([x, 1, 1]), R)
    }

    #[test]
    fn normals_from_interior_neighbours() {
        let (_, mut l) = setup(4);
        put(&mut l, 1, &[Wall], &[]);
        put(&mut l, 2, &[EmptyInterior], &[]);
        assert_eq!(compute_wall_normals(&mut l), 0);
        let v = l.spec.linear([1, 1, 1]);
        assert_eq!(l.get(v, R).unwrap().normals, [Dir::PosX].into_iter().collect());

        // shared wall: two rooms, opposite normals
        let (_, mut l) = setup(3);
        let v = l.spec.linear([1, 1, 1]);
        l.add(v, RoomId(1), ClassSet::single(Wall));
        l.add(v, RoomId(2), ClassSet::single(Wall));
        l.add(l.spec.linear([2, 1, 1]), RoomId(1), ClassSet::single(EmptyInterior));
        l.add(l.spec.linear([0, 1, 1]), RoomId(2), ClassSet::single(InteriorObject));
        compute_wall_normals(&mut l);
        assert_eq!(l.get(v, RoomId(1)).unwrap().normals, [Dir::PosX].into_iter().collect());
        assert_eq!(l.get(v, RoomId(2)).unwrap().normals, [Dir::NegX].into_iter().collect());
    }

    #[test]
    fn outward_thickening_takes_recess_voxels() {
        let (mut g, mut l) = setup(6);
        put(&mut l, 3, &[Wall], &[Dir::PosX]);
        put(&mut l, 4, &[EmptyInterior], &[]);
        g.set([2, 1, 1], NormalState::NormalHorizontal).unwrap();
        g.set([1, 1, 1], NormalState::NormalHorizontal).unwrap();
        let (out, _) = thicken_walls(&mut l, &g, &ReconstructionConfig::default());
        assert_eq!(out, 2);
        assert_eq!(at(&l, 2), ClassSet::single(Wall));
        assert_eq!(at(&l, 1), ClassSet::single(Wall));
        assert!(at(&l, 0).is_empty());
    }

    #[test]
    fn outward_gap_becomes_opening() {
        let (mut g, mut l) = setup(6);
        put(&mut l, 4, &[Wall], &[Dir::PosX]);
        g.set([2, 1, 1], NormalState::NormalHorizontal).unwrap();
        thicken_walls(&mut l, &g, &ReconstructionConfig::default());
        assert_eq!(at(&l, 3), ClassSet::single(WallOpening));
        assert_eq!(at(&l, 2), ClassSet::single(Wall));
    }

    #[test]
    fn inward_thickening_skirting_vs_table() {
        let (_, mut l) = setup(8);
        let g = VoxelGrid::new(l.spec);
        put(&mut l, 0, &[Wall], &[Dir::PosX]);
        put(&mut l, 1, &[InteriorObject], &[]);
        for x in 2..8 {
            put(&mut l, x, &[EmptyInterior], &[]);
        }
        thicken_walls(&mut l, &g, &ReconstructionConfig::default());
        assert_eq!(at(&l, 1), ClassSet::single(Wall));

        let (_, mut l) = setup(8);
        put(&mut l, 0, &[Wall], &[Dir::PosX]);
        for x in 1..5 {
            put(&mut l, x, &[InteriorObject], &[]);
        }
        for x in 5..8 {
            put(&mut l, x, &[EmptyInterior], &[]);
        }
        thicken_walls(&mut l, &g, &ReconstructionConfig::default());
        for x in 1..5 {
            assert_eq!(at(&l, x), ClassSet::single(InteriorObject));
        }
    }

    #[test]
    fn stack_rule() {
        let (_, mut l) = setup(5);
        put(&mut l, 0, &[Wall], &[Dir::PosX]);
        put(&mut l, 1, &[WallOpening], &[Dir::PosX]);
        put(&mut l, 2, &[Wall], &[Dir::PosX]);
        put(&mut l, 3, &[EmptyInterior], &[]);
        refine_openings(&mut l, &ReconstructionConfig::default());
        assert_eq!(at(&l, 1), ClassSet::single(Wall));
    }

    #[test]
    fn occlusion_rule() {
        let cfg = ReconstructionConfig::default();
        // door with nothing in front stays open
        let (_, mut l) = setup(20);
        put(&mut l, 0, &[WallOpening], &[Dir::PosX]);
        for x in 1..20 {
            put(&mut l, x, &[EmptyInterior], &[]);
        }
        let before = l.clone();
        refine_openings(&mut l, &cfg);
        assert_eq!(l, before);

        // large object 0.40 m inward closes it
        for x in 8..16 {
            put(&mut l, x, &[InteriorObject], &[]);
        }
        refine_openings(&mut l, &cfg);
        assert_eq!(at(&l, 0), ClassSet::single(Wall));

        // small object does not
        let (_, mut l) = setup(20);
        put(&mut l, 0, &[WallOpening], &[Dir::PosX]);
        for x in 1..20 {
            put(&mut l, x, &[EmptyInterior], &[]);
        }
        put(&mut l, 8, &[InteriorObject], &[]);
        refine_openings(&mut l, &cfg);
        assert_eq!(at(&l, 0), ClassSet::single(WallOpening));
    }

    #[test]
    fn refine_is_idempotent_on_small_case() {
        let (mut g, mut l) = setup(10);
        put(&mut l, 3, &[Wall], &[]);
        put(&mut l, 4, &[InteriorObject], &[]);
        for x in 5..10 {
            put(&mut l, x, &[EmptyInterior], &[]);
        }
        g.set([1, 1, 1], NormalState::NormalHorizontal).unwrap();
        g.set([4, 1, 1], NormalState::NormalHorizontal).unwrap();
        let cfg = ReconstructionConfig::default();
        refine(&mut l, &g, &cfg);
        let once = l.clone();
        refine(&mut l, &g, &cfg);
        assert_eq!(l, once);
    }
}
