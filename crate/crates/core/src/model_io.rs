//! Sparse text formats for labeled models (`VOXREC1`) and raw normal-state
//! grids (`VOXGRID1`).
//!
//! A `VOXREC1` file is five header lines followed by one record per
//! assignment, sorted by voxel then room:
//!
//! ```text
//! version VOXREC1
//! voxel_size 0.05
//! origin -0.125 -0.125 -0.125
//! dims 85 105 55
//! up_axis +z
//! 2 2 2 1 3 5
//! ```
//!
//! Records are `i j k room_id class_flags normal_flags`. Floats use the
//! shortest representation that reads back to the same value, so a write
//! followed by a read is lossless apart from in-memory flags.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, NormalState, UpAxis, VoxelGrid};
use crate::labels::{Assignment, ClassSet, DirSet, LabeledVoxelGrid, RoomId};

pub const MODEL_VERSION: &str = "VOXREC1";
pub const GRID_VERSION: &str = "VOXGRID1";

fn header(out: &mut String, version: &str, spec: &GridSpec) {
    let [ox, oy, oz] = spec.origin;
    let [nx, ny, nz] = spec.dims;
    let _ = writeln!(out, "version {version}");
    let _ = writeln!(out, "voxel_size {}", spec.voxel_size);
    let _ = writeln!(out, "origin {ox} {oy} {oz}");
    let _ = writeln!(out, "dims {nx} {ny} {nz}");
    let _ = writeln!(out, "up_axis {}", spec.up_axis);
}

/// Serializes a labeled grid.
pub fn model_to_string(model: &LabeledVoxelGrid) -> String {
    let mut out = String::new();
    header(&mut out, MODEL_VERSION, &model.spec);
    for v in 0..model.len() {
        if !model.is_assigned(v) {
            continue;
        }
        let [i, j, k] = model.spec.unlinear(v);
        for a in model.assignments(v) {
            let _ = writeln!(out, "{i} {j} {k} {} {} {}", a.room.0, a.classes.0, a.normals.0);
        }
    }
    out
}

pub fn write_model(model: &LabeledVoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LabeledVoxelGrid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(path, &text)
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let Some((n, line)) = self.iter.next() else {
            return Err(self.err(0, format!("missing `{key}` header line")));
        };
        let mut fields = line.split_whitespace();
        if fields.next() != Some(key) {
            return Err(self.err(n + 1, format!("expected `{key}`")));
        }
        Ok((n + 1, fields.collect()))
    }

    fn numbers<T: std::str::FromStr>(&mut self, key: &str, count: usize) -> Result<(usize, Vec<T>)> {
        let (n, fields) = self.keyed(key)?;
        if fields.len() != count {
            return Err(self.err(n, format!("`{key}` needs {count} values")));
        }
        let vals = fields
            .iter()
            .map(|f| f.parse::<T>().map_err(|_| self.err(n, format!("bad `{key}` value `{f}`"))))
            .collect::<Result<Vec<T>>>()?;
        Ok((n, vals))
    }

    fn header(&mut self, version: &str) -> Result<GridSpec> {
        let (n, v) = self.keyed("version")?;
        if v != [version] {
            return Err(self.err(n, format!("expected version {version}")));
        }
        let (_, vs) = self.numbers::<f64>("voxel_size", 1)?;
        let (_, o) = self.numbers::<f64>("origin", 3)?;
        let (_, d) = self.numbers::<usize>("dims", 3)?;
        let (n, up) = self.keyed("up_axis")?;
        if up.len() != 1 {
            return Err(self.err(n, "`up_axis` needs 1 value"));
        }
        let up: UpAxis = up[0].parse().map_err(|e: Error| self.err(n, e.to_string()))?;
        GridSpec::new([o[0], o[1], o[2]], vs[0], [d[0], d[1], d[2]], up)
            .map_err(|e| self.err(n, e.to_string()))
    }

    /// Next non-blank record as `width` unsigned integers.
    fn record(&mut self, width: usize) -> Option<Result<(usize, Vec<u64>)>> {
        loop {
            let (n, line) = self.iter.next()?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != width {
                return Some(Err(self.err(n + 1, format!("expected {width} fields"))));
            }
            let parsed = fields
                .iter()
                .map(|f| f.parse::<u64>().map_err(|_| self.err(n + 1, format!("bad field `{f}`"))))
                .collect::<Result<Vec<u64>>>();
            return Some(parsed.map(|vals| (n + 1, vals)));
        }
    }

    fn voxel(&self, spec: &GridSpec, n: usize, vals: &[u64]) -> Result<usize> {
        let idx = [vals[0] as i64, vals[1] as i64, vals[2] as i64];
        let idx = spec.check(idx).map_err(|e| self.err(n, e.to_string()))?;
        Ok(spec.linear(idx))
    }
}

/// Parses `VOXREC1` text. `path` is only used in error messages.
pub fn model_from_str(path: &Path, text: &str) -> Result<LabeledVoxelGrid> {
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
    };
    let spec = lines.header(MODEL_VERSION)?;
    let mut model = LabeledVoxelGrid::new(spec);
    let mut last: Option<(usize, u32)> = None;
    while let Some(rec) = lines.record(6) {
        let (n, vals) = rec?;
        let v = lines.voxel(&spec, n, &vals)?;
        let room = u32::try_from(vals[3])
            .ok()
            .filter(|&r| r != u32::MAX)
            .ok_or_else(|| lines.err(n, "room id out of range"))?;
        let classes = u8::try_from(vals[4])
            .ok()
            .and_then(ClassSet::from_bits)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| lines.err(n, "bad class flags"))?;
        let normals = u8::try_from(vals[5])
            .ok()
            .and_then(DirSet::from_bits)
            .ok_or_else(|| lines.err(n, "bad normal flags"))?;
        if last.is_some_and(|l| l >= (v, room)) {
            return Err(lines.err(n, "records not sorted by voxel and room"));
        }
        last = Some((v, room));
        model.put(
            v,
            Assignment {
                room: RoomId(room),
                classes,
                normals,
                flags: 0,
            },
        );
    }
    Ok(model)
}

/// Serializes the non-empty cells of a normal-state grid as
/// `i j k state` records (1 = up, 2 = down, 3 = horizontal).
pub fn grid_to_string(grid: &VoxelGrid) -> String {
    let mut out = String::new();
    header(&mut out, GRID_VERSION, &grid.spec);
    for (v, s) in grid.cells.iter().enumerate() {
        if !s.is_empty() {
            let [i, j, k] = grid.spec.unlinear(v);
            let _ = writeln!(out, "{i} {j} {k} {}", *s as u8);
        }
    }
    out
}

pub fn grid_from_str(path: &Path, text: &str) -> Result<VoxelGrid> {
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
    };
    let spec = lines.header(GRID_VERSION)?;
    let mut grid = VoxelGrid::new(spec);
    while let Some(rec) = lines.record(4) {
        let (n, vals) = rec?;
        let v = lines.voxel(&spec, n, &vals)?;
        grid.cells[v] = u8::try_from(vals[3])
            .ok()
            .and_then(NormalState::from_u8)
            .ok_or_else(|| lines.err(n, "bad normal state"))?;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::SemanticClass::*;

    fn sample() -> LabeledVoxelGrid {
        let spec = GridSpec::new([-0.125, 0.1 + 0.2, 3.0], 0.05, [4, 3, 2], UpAxis::PLUS_Z).unwrap();
        let mut m = LabeledVoxelGrid::new(spec);
        m.add(5, RoomId(2), ClassSet::of(&[Ceiling, Wall]));
        m.get_mut(5, RoomId(2)).unwrap().normals = DirSet(5);
        m.add(5, RoomId(1), ClassSet::single(Floor));
        m.add(23, RoomId(1), ClassSet::single(EmptyInterior));
        m
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = sample();
        let text = model_to_string(&m);
        assert!(text.starts_with("version VOXREC1\nvoxel_size 0.05\norigin -0.125 0.30000000000000004 3\n"));
        assert!(text.contains("\n1 1 0 1 2 0\n1 1 0 2 5 5\n"));
        let back = model_from_str(Path::new("t"), &text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
    }

    #[test]
    fn rejects_bad_records() {
        let text = model_to_string(&sample());
        let bad = text.replace("1 1 0 2 5 5", "9 1 0 2 5 5");
        let err = model_from_str(Path::new("t"), &bad).unwrap_err().to_string();
        assert!(err.contains("line 7"), "{err}");
        let unsorted = text.replace("1 1 0 1 2 0\n1 1 0 2 5 5", "1 1 0 2 5 5\n1 1 0 1 2 0");
        assert!(model_from_str(Path::new("t"), &unsorted).is_err());
        let bad_class = text.replace("1 1 0 1 2 0", "1 1 0 1 64 0");
        assert!(model_from_str(Path::new("t"), &bad_class).is_err());
        assert!(model_from_str(Path::new("t"), "version VOXREC2\n").is_err());
    }

    #[test]
    fn grid_roundtrip() {
        let spec = GridSpec::new([0.0; 3], 0.1, [3, 3, 3], UpAxis::PLUS_Z).unwrap();
        let mut g = VoxelGrid::new(spec);
        g.set([1, 2, 0], NormalState::NormalDown).unwrap();
        g.set([0, 0, 2], NormalState::NormalHorizontal).unwrap();
        let text = grid_to_string(&g);
        assert_eq!(grid_from_str(Path::new("g"), &text).unwrap(), g);
    }
}
