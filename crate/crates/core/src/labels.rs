//! Semantic labels and the multi-room, multi-class labeled voxel grid.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;

/// Room identifier. Reconstructed rooms are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoomId(pub u32);

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticClass {
    Ceiling,
    Floor,
    Wall,
    WallOpening,
    InteriorObject,
    EmptyInterior,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Ceiling,
        SemanticClass::Floor,
        SemanticClass::Wall,
        SemanticClass::WallOpening,
        SemanticClass::InteriorObject,
        SemanticClass::EmptyInterior,
    ];

    /// Bit used in [`ClassSet`] and in the `class_flags` field of model files.
    pub const fn bit(self) -> u8 {
        match self {
            SemanticClass::Ceiling => 1,
            SemanticClass::Floor => 2,
            SemanticClass::Wall => 4,
            SemanticClass::WallOpening => 8,
            SemanticClass::InteriorObject => 16,
            SemanticClass::EmptyInterior => 32,
        }
    }

    /// File stem used by ground-truth directories.
    pub fn file_stem(self) -> &'static str {
        match self {
            SemanticClass::Ceiling => "ceiling",
            SemanticClass::Floor => "floor",
            SemanticClass::Wall => "wall",
            SemanticClass::WallOpening => "wall_opening",
            SemanticClass::InteriorObject => "interior_object",
            SemanticClass::EmptyInterior => "empty_interior",
        }
    }
}

/// Bit set over [`SemanticClass`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassSet(pub u8);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);
    pub const INTERIOR: ClassSet =
        ClassSet(SemanticClass::InteriorObject.bit() | SemanticClass::EmptyInterior.bit());
    pub const WALLISH: ClassSet =
        ClassSet(SemanticClass::Wall.bit() | SemanticClass::WallOpening.bit());
    const VALID_BITS: u8 = 0b11_1111;

    pub fn of(classes: &[SemanticClass]) -> Self {
        ClassSet(classes.iter().fold(0, |acc, c| acc | c.bit()))
    }

    pub fn single(c: SemanticClass) -> Self {
        ClassSet(c.bit())
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::VALID_BITS == 0).then_some(ClassSet(bits))
    }

    #[inline]
    pub fn contains(self, c: SemanticClass) -> bool {
        self.0 & c.bit() != 0
    }

    #[inline]
    pub fn intersects(self, other: ClassSet) -> bool {
        self.0 & other.0 != 0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn insert(&mut self, c: SemanticClass) {
        self.0 |= c.bit();
    }

    #[inline]
    pub fn remove(&mut self, c: SemanticClass) {
        self.0 &= !c.bit();
    }

    pub fn without(self, other: ClassSet) -> Self {
        ClassSet(self.0 & !other.0)
    }

    pub fn union(self, other: ClassSet) -> Self {
        ClassSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = SemanticClass> {
        SemanticClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn is_interior(self) -> bool {
        self.intersects(Self::INTERIOR)
    }

    pub fn is_wallish(self) -> bool {
        self.intersects(Self::WALLISH)
    }

    /// Whether this set may appear as one room's assignment: a single class,
    /// or Wall combined with exactly one of Ceiling/Floor.
    pub fn is_legal(self) -> bool {
        match self.len() {
            1 => true,
            2 => {
                self == ClassSet::of(&[SemanticClass::Ceiling, SemanticClass::Wall])
                    || self == ClassSet::of(&[SemanticClass::Floor, SemanticClass::Wall])
            }
            _ => false,
        }
    }
}

/// Horizontal cardinal grid direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::PosX, Dir::NegX, Dir::PosY, Dir::NegY];

    pub const fn bit(self) -> u8 {
        match self {
            Dir::PosX => 1,
            Dir::NegX => 2,
            Dir::PosY => 4,
            Dir::NegY => 8,
        }
    }

    pub const fn step(self) -> [i64; 3] {
        match self {
            Dir::PosX => [1, 0, 0],
            Dir::NegX => [-1, 0, 0],
            Dir::PosY => [0, 1, 0],
            Dir::NegY => [0, -1, 0],
        }
    }

    pub const fn reverse(self) -> Dir {
        match self {
            Dir::PosX => Dir::NegX,
            Dir::NegX => Dir::PosX,
            Dir::PosY => Dir::NegY,
            Dir::NegY => Dir::PosY,
        }
    }
}

/// Bit set over [`Dir`]; stored per (voxel, room) for wall assignments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirSet(pub u8);

impl DirSet {
    pub const EMPTY: DirSet = DirSet(0);

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !0b1111 == 0).then_some(DirSet(bits))
    }

    #[inline]
    pub fn contains(self, d: Dir) -> bool {
        self.0 & d.bit() != 0
    }

    #[inline]
    pub fn insert(&mut self, d: Dir) {
        self.0 |= d.bit();
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: DirSet) -> DirSet {
        DirSet(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Dir> {
        Dir::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl FromIterator<Dir> for DirSet {
    fn from_iter<I: IntoIterator<Item = Dir>>(iter: I) -> Self {
        let mut s = DirSet::EMPTY;
        for d in iter {
            s.insert(d);
        }
        s
    }
}

/// Marks wall assignments created by outward wall thickening. Kept in memory
/// only; model files do not carry it.
pub const FLAG_THICKENED: u8 = 1;

/// One room's claim on a voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub room: RoomId,
    pub classes: ClassSet,
    pub normals: DirSet,
    pub flags: u8,
}

impl Assignment {
    const VACANT: Assignment = Assignment {
        room: RoomId(u32::MAX),
        classes: ClassSet::EMPTY,
        normals: DirSet::EMPTY,
        flags: 0,
    };

    pub fn new(room: RoomId, classes: ClassSet) -> Self {
        Assignment {
            room,
            classes,
            normals: DirSet::EMPTY,
            flags: 0,
        }
    }

    #[inline]
    fn is_vacant(&self) -> bool {
        self.room.0 == u32::MAX
    }
}

/// Voxel grid where every voxel carries zero or more per-room assignments.
///
/// The first assignment of each voxel lives in a dense vector; further
/// assignments (voxels shared by several rooms) spill into a side table.
/// Assignments of one voxel are kept sorted by room id.
#[derive(Clone, Debug)]
pub struct LabeledVoxelGrid {
    pub spec: GridSpec,
    first: Vec<Assignment>,
    extra: HashMap<usize, Vec<Assignment>>,
}

impl PartialEq for LabeledVoxelGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.first.len() == other.first.len()
            && (0..self.first.len()).all(|i| self.assignments(i).eq(other.assignments(i)))
    }
}

impl LabeledVoxelGrid {
    pub fn new(spec: GridSpec) -> Self {
        LabeledVoxelGrid {
            first: vec![Assignment::VACANT; spec.len()],
            extra: HashMap::new(),
            spec,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    #[inline]
    pub fn is_assigned(&self, voxel: usize) -> bool {
        !self.first[voxel].is_vacant()
    }

    /// Assignments of a voxel, ordered by room id.
    pub fn assignments(&self, voxel: usize) -> impl Iterator<Item = &Assignment> + '_ {
        let head = (!self.first[voxel].is_vacant()).then(|| &self.first[voxel]);
        let tail = if head.is_some() {
            self.extra.get(&voxel).map(|v| v.as_slice()).unwrap_or(&[])
        } else {
            &[]
        };
        head.into_iter().chain(tail.iter())
    }

    pub fn assignment_count(&self, voxel: usize) -> usize {
        if self.first[voxel].is_vacant() {
            0
        } else {
            1 + self.extra.get(&voxel).map_or(0, Vec::len)
        }
    }

    pub fn get(&self, voxel: usize, room: RoomId) -> Option<&Assignment> {
        let head = &self.first[voxel];
        if head.is_vacant() {
            return None;
        }
        if head.room == room {
            return Some(head);
        }
        self.extra.get(&voxel)?.iter().find(|a| a.room == room)
    }

    pub fn get_mut(&mut self, voxel: usize, room: RoomId) -> Option<&mut Assignment> {
        if self.first[voxel].is_vacant() {
            return None;
        }
        if self.first[voxel].room == room {
            return Some(&mut self.first[voxel]);
        }
        self.extra.get_mut(&voxel)?.iter_mut().find(|a| a.room == room)
    }

    pub fn classes(&self, voxel: usize, room: RoomId) -> ClassSet {
        self.get(voxel, room).map_or(ClassSet::EMPTY, |a| a.classes)
    }

    /// Returns the room's assignment for `voxel`, creating an empty one if
    /// needed.
    pub fn entry(&mut self, voxel: usize, room: RoomId) -> &mut Assignment {
        if self.first[voxel].is_vacant() {
            self.first[voxel] = Assignment::new(room, ClassSet::EMPTY);
            return &mut self.first[voxel];
        }
        if self.first[voxel].room == room {
            return &mut self.first[voxel];
        }
        let list = self.extra.entry(voxel).or_default();
        if let Some(pos) = list.iter().position(|a| a.room == room) {
            return &mut list[pos];
        }
        let fresh = Assignment::new(room, ClassSet::EMPTY);
        if room < self.first[voxel].room {
            // keep the head as the smallest room id
            let old = std::mem::replace(&mut self.first[voxel], fresh);
            let pos = list.partition_point(|a| a.room < old.room);
            list.insert(pos, old);
            &mut self.first[voxel]
        } else {
            let pos = list.partition_point(|a| a.room < room);
            list.insert(pos, fresh);
            &mut list[pos]
        }
    }

    /// Adds `classes` to the room's assignment of `voxel`.
    pub fn add(&mut self, voxel: usize, room: RoomId, classes: ClassSet) {
        let a = self.entry(voxel, room);
        a.classes = a.classes.union(classes);
    }

    /// Replaces the room's assignment of `voxel` wholesale.
    pub fn put(&mut self, voxel: usize, assignment: Assignment) {
        *self.entry(voxel, assignment.room) = assignment;
    }

    /// Removes the room's assignment, returning it.
    pub fn remove(&mut self, voxel: usize, room: RoomId) -> Option<Assignment> {
        if self.first[voxel].is_vacant() {
            return None;
        }
        if self.first[voxel].room == room {
            let removed = self.first[voxel];
            match self.extra.get_mut(&voxel) {
                Some(list) if !list.is_empty() => {
                    self.first[voxel] = list.remove(0);
                    if list.is_empty() {
                        self.extra.remove(&voxel);
                    }
                }
                _ => self.first[voxel] = Assignment::VACANT,
            }
            return Some(removed);
        }
        let list = self.extra.get_mut(&voxel)?;
        let pos = list.iter().position(|a| a.room == room)?;
        let removed = list.remove(pos);
        if list.is_empty() {
            self.extra.remove(&voxel);
        }
        Some(removed)
    }

    /// Every room id that appears anywhere, ascending.
    pub fn room_ids(&self) -> Vec<RoomId> {
        let mut ids: Vec<RoomId> = self
            .first
            .iter()
            .filter(|a| !a.is_vacant())
            .map(|a| a.room)
            .chain(self.extra.values().flatten().map(|a| a.room))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Number of voxels with at least one assignment.
    pub fn count_assigned(&self) -> usize {
        self.first.iter().filter(|a| !a.is_vacant()).count()
    }

    /// Voxel indices that carry more than one assignment, ascending.
    pub fn shared_voxels(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.extra.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Copy keeping only the assignments accepted by `keep` (after `map`).
    pub fn filter_map(&self, f: impl Fn(&Assignment) -> Option<Assignment>) -> LabeledVoxelGrid {
        let mut out = LabeledVoxelGrid::new(self.spec);
        for i in 0..self.len() {
            if !self.is_assigned(i) {
                continue;
            }
            for a in self.assignments(i) {
                if let Some(b) = f(a) {
                    out.put(i, b);
                }
            }
        }
        out
    }

    /// Copy with interior classes removed, as used by the evaluation.
    pub fn without_interior(&self) -> LabeledVoxelGrid {
        self.filter_map(|a| {
            let classes = a.classes.without(ClassSet::INTERIOR);
            (!classes.is_empty()).then_some(Assignment {
                classes,
                normals: DirSet::EMPTY,
                flags: 0,
                room: a.room,
            })
        })
    }

    /// Checks the structural invariants of a labeled grid and returns a
    /// description of each violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            if !self.is_assigned(i) {
                continue;
            }
            let list: Vec<&Assignment> = self.assignments(i).collect();
            let mut floors = 0;
            for w in list.windows(2) {
                if w[0].room >= w[1].room {
                    out.push(format!("voxel {i}: duplicate or unsorted room assignments"));
                }
            }
            for a in &list {
                if !a.classes.is_legal() {
                    out.push(format!(
                        "voxel {i} room {}: illegal class set {:#08b}",
                        a.room, a.classes.0
                    ));
                }
                if a.classes.contains(SemanticClass::Floor) {
                    floors += 1;
                }
                if a.classes.is_interior() && list.len() > 1 {
                    out.push(format!("voxel {i}: interior voxel shared by several rooms"));
                }
            }
            if floors > 1 {
                out.push(format!("voxel {i}: floor of {floors} rooms"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UpAxis;

    fn grid() -> LabeledVoxelGrid {
        LabeledVoxelGrid::new(GridSpec::new([0.0; 3], 1.0, [3, 3, 3], UpAxis::default()).unwrap())
    }

    #[test]
    fn legal_class_sets() {
        use SemanticClass::*;
        assert!(ClassSet::of(&[Ceiling, Wall]).is_legal());
        assert!(ClassSet::of(&[Floor, Wall]).is_legal());
        assert!(!ClassSet::of(&[Floor, Ceiling]).is_legal());
        assert!(!ClassSet::of(&[WallOpening, Floor]).is_legal());
        assert!(!ClassSet::EMPTY.is_legal());
        for c in SemanticClass::ALL {
            assert!(ClassSet::single(c).is_legal());
        }
    }

    #[test]
    fn multi_room_storage_stays_sorted() {
        let mut g = grid();
        g.add(4, RoomId(5), ClassSet::single(SemanticClass::Wall));
        g.add(4, RoomId(2), ClassSet::single(SemanticClass::Wall));
        g.add(4, RoomId(9), ClassSet::single(SemanticClass::Ceiling));
        g.add(4, RoomId(2), ClassSet::single(SemanticClass::Floor));
        let rooms: Vec<u32> = g.assignments(4).map(|a| a.room.0).collect();
        assert_eq!(rooms, vec![2, 5, 9]);
        assert_eq!(
            g.classes(4, RoomId(2)),
            ClassSet::of(&[SemanticClass::Wall, SemanticClass::Floor])
        );
        assert_eq!(g.assignment_count(4), 3);
        assert!(g.violations().is_empty());

        assert!(g.remove(4, RoomId(2)).is_some());
        let rooms: Vec<u32> = g.assignments(4).map(|a| a.room.0).collect();
        assert_eq!(rooms, vec![5, 9]);
        assert!(g.remove(4, RoomId(9)).is_some());
        assert!(g.remove(4, RoomId(5)).is_some());
        assert!(!g.is_assigned(4));
        assert!(g.shared_voxels().is_empty());
    }

    #[test]
    fn violations_detect_shared_interior_and_double_floor() {
        let mut g = grid();
        g.add(0, RoomId(1), ClassSet::single(SemanticClass::EmptyInterior));
        g.add(0, RoomId(2), ClassSet::single(SemanticClass::Wall));
        g.add(1, RoomId(1), ClassSet::single(SemanticClass::Floor));
        g.add(1, RoomId(2), ClassSet::single(SemanticClass::Floor));
        let v = g.violations();
        assert_eq!(v.len(), 2, "{v:?}");
    }
}
