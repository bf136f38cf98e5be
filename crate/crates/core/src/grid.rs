//! Grid geometry, dense voxel storage and neighbourhood primitives.
//!
//! All grids live in a *canonical frame*: grid axis 2 always points along the
//! configured up direction, and grid axes 0 and 1 span the horizontal plane.
//! For the default `+z` up axis the canonical frame is the world frame. For
//! other choices the world axes are rotated (never mirrored) into the
//! canonical frame; [`UpAxis::to_canonical`] gives the exact mapping.
//!
//! Cells are stored x-fastest (`i + nx * (j + ny * k)`), so one horizontal
//! section is a contiguous slice.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Converts a metric distance to a whole number of voxels, rounding down.
///
/// A small tolerance keeps exact multiples (0.15 m at 0.05 m) from losing a
/// voxel to floating point error.
pub fn metric_to_voxels(meters: f64, voxel_size: f64) -> usize {
    let v = meters / voxel_size + 1e-6;
    if v <= 0.0 {
        0
    } else {
        v.floor() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// The world direction that counts as "up": one coordinate axis with a sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpAxis {
    pub axis: Axis,
    pub positive: bool,
}

impl Default for UpAxis {
    fn default() -> Self {
        UpAxis {
            axis: Axis::Z,
            positive: true,
        }
    }
}

impl UpAxis {
    pub const PLUS_Z: UpAxis = UpAxis {
        axis: Axis::Z,
        positive: true,
    };

    /// Unit up vector in world coordinates.
    pub fn vector(self) -> Vec3 {
        let s = if self.positive { 1.0 } else { -1.0 };
        match self.axis {
            Axis::X => [s, 0.0, 0.0],
            Axis::Y => [0.0, s, 0.0],
            Axis::Z => [0.0, 0.0, s],
        }
    }

    /// Rotates a world vector into the canonical frame (z up).
    pub fn to_canonical(self, p: Vec3) -> Vec3 {
        let [x, y, z] = p;
        match (self.axis, self.positive) {
            (Axis::Z, true) => [x, y, z],
            (Axis::Z, false) => [y, x, -z],
            (Axis::X, true) => [y, z, x],
            (Axis::X, false) => [z, y, -x],
            (Axis::Y, true) => [z, x, y],
            (Axis::Y, false) => [x, z, -y],
        }
    }

    /// Inverse of [`UpAxis::to_canonical`].
    pub fn to_world(self, c: Vec3) -> Vec3 {
        let [a, b, h] = c;
        match (self.axis, self.positive) {
            (Axis::Z, true) => [a, b, h],
            (Axis::Z, false) => [b, a, -h],
            (Axis::X, true) => [h, a, b],
            (Axis::X, false) => [-h, b, a],
            (Axis::Y, true) => [b, h, a],
            (Axis::Y, false) => [a, -h, b],
        }
    }
}

impl fmt::Display for UpAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.positive { '+' } else { '-' };
        let axis = match self.axis {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        };
        write!(f, "{sign}{axis}")
    }
}

impl FromStr for UpAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (positive, rest) = match s.as_bytes().first() {
            Some(b'+') => (true, &s[1..]),
            Some(b'-') => (false, &s[1..]),
            _ => (true, s.as_str()),
        };
        let axis = match rest {
            "x" => Axis::X,
            "y" => Axis::Y,
            "z" => Axis::Z,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "up axis must be one of +x,-x,+y,-y,+z,-z, got `{s}`"
                )))
            }
        };
        Ok(UpAxis { axis, positive })
    }
}

/// Placement and resolution of a voxel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Min corner of voxel (0,0,0), in canonical-frame coordinates.
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub up_axis: UpAxis,
}

impl GridSpec {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3], up_axis: UpAxis) -> Result<Self> {
        let spec = GridSpec {
            origin,
            voxel_size,
            dims,
            up_axis,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "voxel size must be positive, got {}",
                self.voxel_size
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "grid dims must be >= 1, got {:?}",
                self.dims
            )));
        }
        if self.origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in one horizontal section.
    #[inline]
    pub fn section_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Floor-based mapping of a world point to a (possibly out-of-range)
    /// grid index.
    pub fn world_to_grid(&self, p: Vec3) -> [i64; 3] {
        let c = self.up_axis.to_canonical(p);
        let mut out = [0i64; 3];
        for a in 0..3 {
            out[a] = ((c[a] - self.origin[a]) / self.voxel_size).floor() as i64;
        }
        out
    }

    /// World position of the voxel's canonical min corner.
    pub fn grid_to_world(&self, idx: [usize; 3]) -> Vec3 {
        let c = [
            self.origin[0] + idx[0] as f64 * self.voxel_size,
            self.origin[1] + idx[1] as f64 * self.voxel_size,
            self.origin[2] + idx[2] as f64 * self.voxel_size,
        ];
        self.up_axis.to_world(c)
    }

    /// Canonical-frame min and max corners of a voxel.
    pub fn voxel_bounds(&self, idx: [usize; 3]) -> (Vec3, Vec3) {
        let lo = [
            self.origin[0] + idx[0] as f64 * self.voxel_size,
            self.origin[1] + idx[1] as f64 * self.voxel_size,
            self.origin[2] + idx[2] as f64 * self.voxel_size,
        ];
        (lo, add(lo, [self.voxel_size; 3]))
    }

    /// Canonical-frame extent of the whole grid.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let hi = [
            self.origin[0] + self.dims[0] as f64 * self.voxel_size,
            self.origin[1] + self.dims[1] as f64 * self.voxel_size,
            self.origin[2] + self.dims[2] as f64 * self.voxel_size,
        ];
        (self.origin, hi)
    }

    #[inline]
    pub fn contains(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    pub fn check(&self, idx: [i64; 3]) -> Result<[usize; 3]> {
        if self.contains(idx) {
            Ok([idx[0] as usize, idx[1] as usize, idx[2] as usize])
        } else {
            Err(Error::OutOfBounds {
                index: idx,
                dims: self.dims,
            })
        }
    }

    #[inline]
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    #[inline]
    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Linear index of a horizontal column (x, y).
    #[inline]
    pub fn column(&self, x: usize, y: usize) -> usize {
        x + self.dims[0] * y
    }

    /// Offsets `idx` by `d`, returning `None` if the result leaves the grid.
    #[inline]
    pub fn offset(&self, idx: [usize; 3], d: [i64; 3]) -> Option<[usize; 3]> {
        let n = [
            idx[0] as i64 + d[0],
            idx[1] as i64 + d[1],
            idx[2] as i64 + d[2],
        ];
        if self.contains(n) {
            Some([n[0] as usize, n[1] as usize, n[2] as usize])
        } else {
            None
        }
    }

    /// In-bounds neighbours of `idx` under `scheme`. 2D schemes stay in the
    /// horizontal section of `idx`.
    pub fn neighbors(&self, idx: [i64; 3], scheme: Neighborhood) -> Result<Vec<[usize; 3]>> {
        let idx = self.check(idx)?;
        Ok(scheme
            .offsets()
            .iter()
            .filter_map(|&d| self.offset(idx, d))
            .collect())
    }

    /// Horizontal sections in the requested vertical order.
    pub fn horizontal_sections(&self, order: SectionOrder) -> Sections {
        let nz = self.dims[2];
        Sections {
            next: 0,
            count: nz,
            order,
            section_len: self.section_len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighborhood {
    N26,
    N8,
    N4,
}

pub const N26_OFFSETS: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

pub const N8_OFFSETS: [[i64; 3]; 8] = [
    [-1, -1, 0],
    [0, -1, 0],
    [1, -1, 0],
    [-1, 0, 0],
    [1, 0, 0],
    [-1, 1, 0],
    [0, 1, 0],
    [1, 1, 0],
];

pub const N4_OFFSETS: [[i64; 3]; 4] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]];

impl Neighborhood {
    pub fn offsets(self) -> &'static [[i64; 3]] {
        match self {
            Neighborhood::N26 => &N26_OFFSETS,
            Neighborhood::N8 => &N8_OFFSETS,
            Neighborhood::N4 => &N4_OFFSETS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionOrder {
    BottomUp,
    TopDown,
}

/// One constant-height slice of a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub height: usize,
    pub cells: std::ops::Range<usize>,
}

pub struct Sections {
    next: usize,
    count: usize,
    order: SectionOrder,
    section_len: usize,
}

impl Iterator for Sections {
    type Item = Section;

    fn next(&mut self) -> Option<Section> {
        if self.next >= self.count {
            return None;
        }
        let height = match self.order {
            SectionOrder::BottomUp => self.next,
            SectionOrder::TopDown => self.count - 1 - self.next,
        };
        self.next += 1;
        let start = height * self.section_len;
        Some(Section {
            height,
            cells: start..start + self.section_len,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.count - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Sections {}

/// Per-voxel classification of the input geometry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum NormalState {
    #[default]
    Empty = 0,
    NormalUp = 1,
    NormalDown = 2,
    NormalHorizontal = 3,
}

impl NormalState {
    #[inline]
    pub fn is_empty(self) -> bool {
        self == NormalState::Empty
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => NormalState::Empty,
            1 => NormalState::NormalUp,
            2 => NormalState::NormalDown,
            3 => NormalState::NormalHorizontal,
            _ => return None,
        })
    }
}

/// Dense grid of [`NormalState`], one byte per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub cells: Vec<NormalState>,
}

impl VoxelGrid {
    pub fn new(spec: GridSpec) -> Self {
        VoxelGrid {
            cells: vec![NormalState::Empty; spec.len()],
            spec,
        }
    }

    pub fn get(&self, idx: [i64; 3]) -> Result<NormalState> {
        let idx = self.spec.check(idx)?;
        Ok(self.cells[self.spec.linear(idx)])
    }

    pub fn set(&mut self, idx: [i64; 3], state: NormalState) -> Result<()> {
        let idx = self.spec.check(idx)?;
        let i = self.spec.linear(idx);
        self.cells[i] = state;
        Ok(())
    }

    #[inline]
    pub fn at(&self, idx: [usize; 3]) -> NormalState {
        self.cells[self.spec.linear(idx)]
    }

    pub fn section(&self, height: usize) -> &[NormalState] {
        let n = self.spec.section_len();
        &self.cells[height * n..(height + 1) * n]
    }

    pub fn count_non_empty(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_empty()).count()
    }
}
