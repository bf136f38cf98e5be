//! Top-down classification sweep: every voxel between a room's ceiling and
//! floor gets the room id and a semantic class.

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::labels::{Assignment, ClassSet, LabeledVoxelGrid, RoomId, SemanticClass};
use crate::par;
use crate::room_detect::{PixelState, RoomModel};

/// Vertical label chain of one room column.
#[derive(Clone, Debug, PartialEq)]
struct Chain {
    column: [usize; 2],
    top: usize,
    /// Classes from `top` downward, one per voxel.
    classes: Vec<ClassSet>,
}

fn room_chains(room: &RoomModel, grid: &VoxelGrid) -> Result<Vec<Chain>> {
    use SemanticClass::*;
    let spec = grid.spec;
    let empty_at = |col: [usize; 2], z: usize| grid.cells[spec.linear([col[0], col[1], z])].is_empty();
    let mut chains = Vec::new();
    for p in 0..room.ceiling.len() {
        if room.ceiling.state[p] != PixelState::Ceiling {
            continue;
        }
        let col = room.ceiling.column(p);
        let c = room.ceiling.height[p];
        let f = room.floor.height[p];
        if f >= c || f < 0 {
            return Err(Error::Room {
                room: room.id.0,
                message: format!("floor {f} not below ceiling {c} at column {col:?}"),
            });
        }
        let (c, f) = (c as usize, f as usize);
        let mut classes = Vec::with_capacity(c - f + 1);
        classes.push(ClassSet::single(Ceiling));
        for z in (f + 1..c).rev() {
            classes.push(ClassSet::single(if empty_at(col, z) {
                EmptyInterior
            } else {
                InteriorObject
            }));
        }
        classes.push(ClassSet::single(Floor));
        chains.push(Chain {
            column: col,
            top: c,
            classes,
        });
    }
    for cv in &room.wall_contour {
        if cv.bottom >= cv.top {
            return Err(Error::Room {
                room: room.id.0,
                message: format!("contour column {:?} has floor {} not below ceiling {}", cv.column, cv.bottom, cv.top),
            });
        }
        let mut classes = Vec::with_capacity(cv.top - cv.bottom + 1);
        classes.push(ClassSet::of(&[Ceiling, Wall]));
        for z in (cv.bottom + 1..cv.top).rev() {
            classes.push(ClassSet::single(if empty_at(cv.column, z) {
                WallOpening
            } else {
                Wall
            }));
        }
        classes.push(ClassSet::of(&[Floor, Wall]));
        chains.push(Chain {
            column: cv.column,
            top: cv.top,
            classes,
        });
    }
    Ok(chains)
}

/// Adds an assignment unless it would break floor uniqueness or interior
/// exclusivity; earlier rooms win. Returns false when something was dropped.
pub fn add_checked(labeled: &mut LabeledVoxelGrid, voxel: usize, room: RoomId, classes: ClassSet) -> bool {
    let mut classes = classes;
    let mut clean = true;
    let others: Vec<ClassSet> = labeled
        .assignments(voxel)
        .filter(|a| a.room != room)
        .map(|a| a.classes)
        .collect();
    if others.is_empty() {
        labeled.add(voxel, room, classes);
        return true;
    }
    if classes.is_interior() || others.iter().any(|c| c.is_interior()) {
        return false;
    }
    if classes.contains(SemanticClass::Floor) && others.iter().any(|c| c.contains(SemanticClass::Floor)) {
        classes.remove(SemanticClass::Floor);
        clean = false;
    }
    if !classes.is_empty() {
        labeled.add(voxel, room, classes);
    }
    clean
}

/// Counters reported by the sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct SweepDiagnostics {
    /// Assignments dropped or trimmed to keep the grid legal.
    pub conflicts: usize,
}

/// Labels every room column from its ceiling down to its floor. Column
/// chains are computed in parallel; they are written room by room in room
/// order, so earlier (larger) rooms win conflicts.
pub fn classification_sweep(
    grid: &VoxelGrid,
    rooms: &[RoomModel],
) -> Result<(LabeledVoxelGrid, SweepDiagnostics)> {
    let spec = grid.spec;
    let chains: Vec<Vec<Chain>> = par::map(rooms, |r| room_chains(r, grid))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut labeled = LabeledVoxelGrid::new(spec);
    let mut diag = SweepDiagnostics::default();
    for (room, chains) in rooms.iter().zip(&chains) {
        for chain in chains {
            for (i, &classes) in chain.classes.iter().enumerate() {
                let v = spec.linear([chain.column[0], chain.column[1], chain.top - i]);
                if !add_checked(&mut labeled, v, room.id, classes) {
                    diag.conflicts += 1;
                }
            }
        }
    }
    if diag.conflicts > 0 {
        log::warn!("classification dropped {} conflicting assignments", diag.conflicts);
    }
    Ok((labeled, diag))
}

/// Per-room, per-column contiguity check used by tests and diagnostics:
/// every room column must read Ceiling at its top, Floor at its bottom and
/// have no gap in between.
pub fn chain_violations(labeled: &LabeledVoxelGrid) -> Vec<String> {
    let spec = labeled.spec;
    let [nx, ny, nz] = spec.dims;
    let mut out = Vec::new();
    let mut per_room: std::collections::BTreeMap<RoomId, Vec<(usize, Assignment)>> = Default::default();
    for y in 0..ny {
        for x in 0..nx {
            per_room.clear();
            for z in 0..nz {
                let v = spec.linear([x, y, z]);
                for a in labeled.assignments(v) {
                    per_room.entry(a.room).or_default().push((z, *a));
                }
            }
            for (room, list) in &per_room {
                let floors = list
                    .iter()
                    .filter(|(_, a)| a.classes.contains(SemanticClass::Floor))
                    .count();
                if floors > 1 {
                    out.push(format!("room {room} column ({x},{y}): {floors} floor voxels"));
                }
                let zs: Vec<usize> = list.iter().map(|(z, _)| *z).collect();
                if zs.windows(2).any(|w| w[1] != w[0] + 1) {
                    out.push(format!("room {room} column ({x},{y}): gap in chain"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, NormalState, UpAxis};
    use crate::room_detect::{ContourVoxel, PixelGrid2D};
    use SemanticClass::*;

    fn setup() -> (VoxelGrid, RoomModel) {
        let spec = GridSpec::new([0.0; 3], 0.05, [3, 1, 12], UpAxis::default()).unwrap();
        let mut g = VoxelGrid::new(spec);
        g.set([1, 0, 5], NormalState::NormalHorizontal).unwrap();
        for z in 3..10 {
            if z != 5 && z != 6 {
                g.set([0, 0, z], NormalState::NormalHorizontal).unwrap();
            }
        }
        let mut ceiling = PixelGrid2D::new([1, 0], [1, 1]);
        ceiling.state[0] = PixelState::Ceiling;
        ceiling.height[0] = 10;
        let mut floor = PixelGrid2D::new([1, 0], [1, 1]);
        floor.state[0] = PixelState::Floor;
        floor.height[0] = 2;
        let room = RoomModel {
            id: RoomId(1),
            segment: 0,
            ceiling,
            floor,
            holes: vec![],
            wall_contour: vec![ContourVoxel {
                column: [0, 0],
                top: 10,
                bottom: 2,
            }],
        };
        (g, room)
    }

    #[test]
    fn interior_and_wall_columns() {
        let (g, room) = setup();
        let (lab, diag) = classification_sweep(&g, &[room]).unwrap();
        assert_eq!(diag.conflicts, 0);
        let at = |x: usize, z: usize| lab.classes(g.spec.linear([x, 0, z]), RoomId(1));
        assert_eq!(at(1, 10), ClassSet::single(Ceiling));
        for z in 3..10 {
            let want = if z == 5 { InteriorObject } else { EmptyInterior };
            assert_eq!(at(1, z), ClassSet::single(want), "z={z}");
        }
        assert_eq!(at(1, 2), ClassSet::single(Floor));
        assert_eq!(at(0, 10), ClassSet::of(&[Ceiling, Wall]));
        assert_eq!(at(0, 9), ClassSet::single(Wall));
        assert_eq!(at(0, 6), ClassSet::single(WallOpening));
        assert_eq!(at(0, 5), ClassSet::single(WallOpening));
        assert_eq!(at(0, 3), ClassSet::single(Wall));
        assert_eq!(at(0, 2), ClassSet::of(&[Floor, Wall]));
        assert!(at(1, 1).is_empty());
        assert!(lab.violations().is_empty());
        assert!(chain_violations(&lab).is_empty());
    }

    #[test]
    fn inverted_column_is_an_error() {
        let (g, mut room) = setup();
        room.floor.height[0] = 10;
        assert!(classification_sweep(&g, &[room]).is_err());
    }

    #[test]
    fn earlier_room_keeps_floor_and_interior() {
        let (g, room) = setup();
        let mut second = room.clone();
        second.id = RoomId(2);
        let (lab, diag) = classification_sweep(&g, &[room, second]).unwrap();
        assert!(diag.conflicts > 0);
        assert!(lab.violations().is_empty());
        let v = g.spec.linear([0, 0, 2]);
        assert_eq!(lab.classes(v, RoomId(2)), ClassSet::single(Wall));
        let v = g.spec.linear([1, 0, 4]);
        assert_eq!(lab.assignment_count(v), 1);
    }
}
