//! Triangle mesh loading and writing (OBJ, PLY), labeled ground-truth mesh
//! sets, and the colored voxel export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{cross, norm, scale, sub, Vec3};
use crate::labels::{LabeledVoxelGrid, SemanticClass};

/// Indexed triangle mesh with one unit normal per face.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Computed from the winding order: normalize((b - a) x (c - a)).
    pub face_normals: Vec<Vec3>,
    /// Zero-area faces dropped while building the mesh.
    pub degenerate_dropped: usize,
}

/// Unit normal of a triangle, or `None` if it has (numerically) zero area.
pub fn triangle_normal(a: Vec3, b: Vec3, c: Vec3) -> Option<Vec3> {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let n = cross(e1, e2);
    let len = norm(n);
    let scale_ref = norm(e1).max(norm(e2));
    if !(len > 1e-12 * scale_ref * scale_ref) || !len.is_finite() {
        return None;
    }
    Some(scale(n, 1.0 / len))
}

impl TriangleMesh {
    /// Builds a mesh from indexed faces, dropping degenerate triangles.
    pub fn from_indexed(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mut triangles = Vec::with_capacity(faces.len());
        let mut face_normals = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for (n, f) in faces.into_iter().enumerate() {
            if f.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "face {n} references vertex {:?} but the mesh has {} vertices",
                    f,
                    vertices.len()
                )));
            }
            match triangle_normal(
                vertices[f[0] as usize],
                vertices[f[1] as usize],
                vertices[f[2] as usize],
            ) {
                Some(normal) => {
                    triangles.push(f);
                    face_normals.push(normal);
                }
                None => dropped += 1,
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            face_normals,
            degenerate_dropped: dropped,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Axis-aligned bounds of the vertices referenced by triangles.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in &self.triangles {
            for &i in t {
                let p = self.vertices[i as usize];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        (!self.triangles.is_empty()).then_some((lo, hi))
    }

    /// Appends another mesh, re-indexing its faces.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.face_normals.extend_from_slice(&other.face_normals);
        self.degenerate_dropped += other.degenerate_dropped;
    }
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

/// Loads an OBJ or PLY mesh, chosen by file extension (case-insensitive).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mesh = match ext.as_deref() {
        Some("obj") => parse_obj(path, &bytes)?,
        Some("ply") => parse_ply(path, &bytes)?,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported mesh extension (expected .obj or .ply)",
                path.display()
            )))
        }
    };
    if mesh.degenerate_dropped > 0 {
        log::warn!(
            "{}: dropped {} degenerate triangles",
            path.display(),
            mesh.degenerate_dropped
        );
    }
    Ok(mesh)
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, format!("line {line}"), "missing coordinate"))?;
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, format!("line {line}"), format!("bad number `{tok}`")))
}

/// Parses ASCII OBJ text. Only `v` and `f` records matter; polygons are fan
/// triangulated.
pub fn parse_obj(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_err(path, format!("byte {}", e.valid_up_to()), "not valid UTF-8"))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(path, line, toks.next())?;
                let y = parse_f64(path, line, toks.next())?;
                let z = parse_f64(path, line, toks.next())?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let mut poly = Vec::with_capacity(4);
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| {
                        parse_err(path, format!("line {line}"), format!("bad face index `{tok}`"))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(parse_err(
                            path,
                            format!("line {line}"),
                            format!("face index {idx} out of range"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(
                        path,
                        format!("line {line}"),
                        "face needs at least 3 vertices",
                    ));
                }
                for i in 2..poly.len() {
                    faces.push([poly[0], poly[i - 1], poly[i]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::from_indexed(vertices, faces)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

/// Parses an ASCII or binary little-endian PLY mesh.
pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<TriangleMesh> {
    // header is ASCII up to and including the `end_header` line
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .ok_or_else(|| parse_err(path, format!("byte {pos}"), "unterminated PLY header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| parse_err(path, format!("line {line_no}"), "header is not ASCII"))?
            .trim();
        pos = end + 1;
        let loc = || format!("line {line_no}");
        let toks: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_err(path, loc(), "missing `ply` magic"));
            }
            continue;
        }
        match toks.first().copied() {
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLe,
                    other => {
                        return Err(parse_err(
                            path,
                            loc(),
                            format!("unsupported PLY format {other:?}"),
                        ))
                    }
                });
            }
            Some("element") => {
                let name = toks.get(1).ok_or_else(|| parse_err(path, loc(), "element without name"))?;
                let count = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, loc(), "element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, loc(), "property before any element"))?;
                let bad = || parse_err(path, loc(), format!("bad property `{line}`"));
                let prop = if toks.get(1) == Some(&"list") {
                    let count = toks.get(2).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let item = toks.get(3).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let name = toks.get(4).ok_or_else(bad)?;
                    Property {
                        name: name.to_string(),
                        kind: PropKind::List { count, item },
                    }
                } else {
                    let ty = toks.get(1).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let name = toks.get(2).ok_or_else(bad)?;
                    Property {
                        name: name.to_string(),
                        kind: PropKind::Scalar(ty),
                    }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(parse_err(path, loc(), format!("unknown header keyword `{other}`")))
            }
        }
    }
    let encoding =
        encoding.ok_or_else(|| parse_err(path, format!("line {line_no}"), "missing format line"))?;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut body = Body {
        path,
        bytes,
        pos,
        line: line_no,
        encoding,
    };
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let coord_idx: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|n| el.props.iter().position(|p| p.name == *n))
            .collect();
        if is_vertex && coord_idx.iter().any(Option::is_none) {
            return Err(parse_err(path, "header".into(), "vertex element lacks x, y or z"));
        }
        let face_prop = el
            .props
            .iter()
            .position(|p| p.name == "vertex_indices" || p.name == "vertex_index");
        for _ in 0..el.count {
            let values = body.read_record(el)?;
            if is_vertex {
                let mut p = [0.0; 3];
                for a in 0..3 {
                    p[a] = values[coord_idx[a].unwrap()][0];
                }
                vertices.push(p);
            } else if is_face {
                let Some(fp) = face_prop else {
                    return Err(parse_err(path, "header".into(), "face element lacks vertex_indices"));
                };
                let list = &values[fp];
                if list.len() < 3 {
                    return Err(parse_err(path, body.location(), "face needs at least 3 vertices"));
                }
                let mut poly = Vec::with_capacity(list.len());
                for &v in list {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(parse_err(path, body.location(), format!("bad vertex index {v}")));
                    }
                    poly.push(v as u32);
                }
                for i in 2..poly.len() {
                    faces.push([poly[0], poly[i - 1], poly[i]]);
                }
            }
        }
    }
    for (n, f) in faces.iter().enumerate() {
        if f.iter().any(|&i| i as usize >= vertices.len()) {
            return Err(parse_err(
                path,
                format!("face {n}"),
                format!("vertex index out of range ({} vertices)", vertices.len()),
            ));
        }
    }
    TriangleMesh::from_indexed(vertices, faces)
}

struct Body<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    encoding: PlyEncoding,
}

impl Body<'_> {
    fn location(&self) -> String {
        match self.encoding {
            PlyEncoding::Ascii => format!("line {}", self.line),
            PlyEncoding::BinaryLe => format!("byte {}", self.pos),
        }
    }

    /// Reads one element record as a list of values per property.
    fn read_record(&mut self, el: &Element) -> Result<Vec<Vec<f64>>> {
        match self.encoding {
            PlyEncoding::Ascii => self.read_ascii(el),
            PlyEncoding::BinaryLe => self.read_binary(el),
        }
    }

    fn read_ascii(&mut self, el: &Element) -> Result<Vec<Vec<f64>>> {
        // skip blank lines
        let line = loop {
            if self.pos >= self.bytes.len() {
                return Err(parse_err(self.path, self.location(), "unexpected end of file"));
            }
            let end = self.bytes[self.pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(self.bytes.len(), |e| self.pos + e);
            let text = std::str::from_utf8(&self.bytes[self.pos..end])
                .map_err(|_| parse_err(self.path, self.location(), "not valid UTF-8"))?;
            self.pos = end + 1;
            self.line += 1;
            if !text.trim().is_empty() {
                break text;
            }
        };
        let mut toks = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let t = toks.next().ok_or_else(|| {
                parse_err(self.path, format!("line {}", self.line), format!("missing {what}"))
            })?;
            t.parse::<f64>().map_err(|_| {
                parse_err(self.path, format!("line {}", self.line), format!("bad number `{t}`"))
            })
        };
        let mut out = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p.kind {
                PropKind::Scalar(_) => out.push(vec![next(&p.name)?]),
                PropKind::List { .. } => {
                    let n = next("list count")?;
                    let n = n as usize;
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        items.push(next(&p.name)?);
                    }
                    out.push(items);
                }
            }
        }
        Ok(out)
    }

    fn take(&mut self, s: Scalar) -> Result<f64> {
        let n = s.size();
        if self.pos + n > self.bytes.len() {
            return Err(parse_err(self.path, self.location(), "unexpected end of binary data"));
        }
        let v = s.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }

    fn read_binary(&mut self, el: &Element) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p.kind {
                PropKind::Scalar(s) => out.push(vec![self.take(s)?]),
                PropKind::List { count, item } => {
                    let n = self.take(count)?;
                    if n < 0.0 {
                        return Err(parse_err(self.path, self.location(), "negative list length"));
                    }
                    let mut items = Vec::with_capacity(n as usize);
                    for _ in 0..n as usize {
                        items.push(self.take(item)?);
                    }
                    out.push(items);
                }
            }
        }
        Ok(out)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a mesh as ASCII OBJ. Coordinates use the shortest round-trip
/// representation, so reading the file back is exact.
pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.triangles.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a mesh as binary little-endian PLY with double coordinates.
pub fn write_ply_binary(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    let io = |e| Error::io(path, e);
    w.write_all(header.as_bytes()).map_err(io)?;
    for v in &mesh.vertices {
        for c in v {
            w.write_all(&c.to_le_bytes()).map_err(io)?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8]).map_err(io)?;
        for i in t {
            w.write_all(&i.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Ground truth: per room, one mesh per surface class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledMeshSet {
    pub rooms: BTreeMap<u32, BTreeMap<SemanticClass, TriangleMesh>>,
}

/// Classes that ground-truth directories may contain.
pub const GT_CLASSES: [SemanticClass; 4] = [
    SemanticClass::Ceiling,
    SemanticClass::Floor,
    SemanticClass::Wall,
    SemanticClass::WallOpening,
];

impl LabeledMeshSet {
    /// Total vertex count over all meshes.
    pub fn vertex_count(&self) -> usize {
        self.rooms
            .values()
            .flat_map(|m| m.values())
            .map(|m| m.vertices.len())
            .sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut acc: Option<(Vec3, Vec3)> = None;
        for mesh in self.rooms.values().flat_map(|m| m.values()) {
            if let Some((lo, hi)) = mesh.bounds() {
                acc = Some(match acc {
                    None => (lo, hi),
                    Some((a, b)) => (
                        [a[0].min(lo[0]), a[1].min(lo[1]), a[2].min(lo[2])],
                        [b[0].max(hi[0]), b[1].max(hi[1]), b[2].max(hi[2])],
                    ),
                });
            }
        }
        acc
    }
}

fn find_class_file(dir: &Path, class: SemanticClass) -> Result<Option<PathBuf>> {
    let mut found = None;
    for ext in ["obj", "ply"] {
        let p = dir.join(format!("{}.{ext}", class.file_stem()));
        if p.is_file() {
            if found.is_some() {
                return Err(Error::GroundTruth(format!(
                    "{}: both .obj and .ply present for {}",
                    dir.display(),
                    class.file_stem()
                )));
            }
            found = Some(p);
        }
    }
    Ok(found)
}

/// Loads `<root>/room_<id>/{ceiling,floor,wall,wall_opening}.{obj|ply}`.
pub fn load_labeled_set(root: impl AsRef<Path>) -> Result<LabeledMeshSet> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(id) = name.strip_prefix("room_") else { continue };
        if !entry.path().is_dir() {
            continue;
        }
        let id: u32 = id.parse().map_err(|_| {
            Error::GroundTruth(format!("{}: `{name}` is not room_<number>", root.display()))
        })?;
        dirs.push((id, entry.path()));
    }
    dirs.sort();
    let mut set = LabeledMeshSet::default();
    for (id, dir) in dirs {
        if set.rooms.contains_key(&id) {
            return Err(Error::GroundTruth(format!("duplicate directory for room {id}")));
        }
        let mut classes = BTreeMap::new();
        for class in GT_CLASSES {
            let Some(file) = find_class_file(&dir, class)? else {
                if matches!(class, SemanticClass::Ceiling | SemanticClass::Floor) {
                    return Err(Error::GroundTruth(format!(
                        "room {id}: missing {} mesh",
                        class.file_stem()
                    )));
                }
                continue;
            };
            let mesh = load_mesh(&file)?;
            if mesh.is_empty() {
                if matches!(class, SemanticClass::Ceiling | SemanticClass::Floor) {
                    return Err(Error::GroundTruth(format!(
                        "room {id}: {} mesh has no triangles",
                        class.file_stem()
                    )));
                }
                continue;
            }
            classes.insert(class, mesh);
        }
        set.rooms.insert(id, classes);
    }
    if set.rooms.is_empty() {
        return Err(Error::GroundTruth(format!(
            "no rooms found under {}",
            root.display()
        )));
    }
    Ok(set)
}

/// Writes a labeled set in the layout read by [`load_labeled_set`] (OBJ).
pub fn write_labeled_set(set: &LabeledMeshSet, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    for (id, classes) in &set.rooms {
        let dir = root.join(format!("room_{id}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (class, mesh) in classes {
            write_obj(mesh, dir.join(format!("{}.obj", class.file_stem())))?;
        }
    }
    Ok(())
}

/// RGB colors for the exported voxel mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Palette {
    pub ceiling: [u8; 3],
    pub floor: [u8; 3],
    pub wall: [u8; 3],
    pub wall_opening: [u8; 3],
    pub interior_object: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            ceiling: [178, 34, 34],
            floor: [60, 120, 180],
            wall: [200, 200, 200],
            wall_opening: [240, 200, 60],
            interior_object: [90, 160, 90],
        }
    }
}

impl Palette {
    /// Visible color of a class set, by precedence
    /// Wall > Ceiling > Floor > WallOpening > InteriorObject. Sets holding
    /// only EmptyInterior have no color.
    pub fn color(&self, classes: crate::labels::ClassSet) -> Option<[u8; 3]> {
        use SemanticClass::*;
        [
            (Wall, self.wall),
            (Ceiling, self.ceiling),
            (Floor, self.floor),
            (WallOpening, self.wall_opening),
            (InteriorObject, self.interior_object),
        ]
        .into_iter()
        .find(|(c, _)| classes.contains(*c))
        .map(|(_, rgb)| rgb)
    }
}

// cube corners as offsets, and 12 outward-facing triangles
const CUBE_CORNERS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
    [0.0, 1.0, 1.0],
];

const CUBE_FACES: [[u32; 3]; 12] = [
    [0, 2, 1],
    [0, 3, 2],
    [4, 5, 6],
    [4, 6, 7],
    [0, 1, 5],
    [0, 5, 4],
    [1, 2, 6],
    [1, 6, 5],
    [2, 3, 7],
    [2, 7, 6],
    [3, 0, 4],
    [3, 4, 7],
];

/// Writes one colored cube per (voxel, room) assignment as ASCII PLY, in
/// world coordinates.
pub fn write_colored_voxel_mesh(
    labeled: &LabeledVoxelGrid,
    path: impl AsRef<Path>,
    palette: &Palette,
) -> Result<()> {
    let path = path.as_ref();
    let spec = labeled.spec;
    let mut cubes = Vec::new();
    for i in 0..labeled.len() {
        if !labeled.is_assigned(i) {
            continue;
        }
        for a in labeled.assignments(i) {
            if let Some(rgb) = palette.color(a.classes) {
                cubes.push((i, rgb));
            }
        }
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(
        w,
        "ply\nformat ascii 1.0\ncomment voxrec labeled voxels\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        cubes.len() * 8,
        cubes.len() * 12
    )
    .map_err(io)?;
    let vs = spec.voxel_size;
    for &(i, rgb) in &cubes {
        let (lo, _) = spec.voxel_bounds(spec.unlinear(i));
        for c in CUBE_CORNERS {
            let p = spec
                .up_axis
                .to_world([lo[0] + c[0] * vs, lo[1] + c[1] * vs, lo[2] + c[2] * vs]);
            writeln!(
                w,
                "{} {} {} {} {} {}",
                p[0] as f32, p[1] as f32, p[2] as f32, rgb[0], rgb[1], rgb[2]
            )
            .map_err(io)?;
        }
    }
    for n in 0..cubes.len() as u32 {
        let base = n * 8;
        for f in CUBE_FACES {
            writeln!(w, "3 {} {} {}", base + f[0], base + f[1], base + f[2]).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(text: &str) -> Result<TriangleMesh> {
        parse_obj(Path::new("t.obj"), text.as_bytes())
    }

    #[test]
    fn obj_normals_follow_winding() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.face_normals, vec![[0.0, 0.0, 1.0]]);
        let m = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 3 2\n").unwrap();
        assert_eq!(m.face_normals, vec![[0.0, 0.0, -1.0]]);
    }

    #[test]
    fn obj_quads_are_fanned_and_suffixes_ignored() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3//1 4\n").unwrap();
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.face_normals.len(), 2);
        let m = obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = obj("v 0 0 0\nv 1 0 x\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = obj("v 0 0 0\nf 1 2 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn degenerate_faces_are_dropped() {
        let m = obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\nf 1 1 4\n").unwrap();
        assert_eq!(m.triangles.len(), 1);
        assert_eq!(m.degenerate_dropped, 2);
    }

    #[test]
    fn ascii_ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 1 2 3\n1 0 0 1 2 3\n1 1 0 1 2 3\n0 1 0 1 2 3\n4 0 1 2 3\n";
        let m = parse_ply(Path::new("t.ply"), text.as_bytes()).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.face_normals[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn truncated_binary_ply_reports_byte_offset() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let err = parse_ply(Path::new("t.ply"), &bytes).unwrap_err().to_string();
        assert!(err.contains("byte"), "{err}");
    }

    #[test]
    fn palette_precedence() {
        use crate::labels::ClassSet;
        let p = Palette::default();
        let cw = ClassSet::of(&[SemanticClass::Ceiling, SemanticClass::Wall]);
        assert_eq!(p.color(cw), Some(p.wall));
        let fw = ClassSet::of(&[SemanticClass::Floor, SemanticClass::WallOpening]);
        assert_eq!(p.color(fw), Some(p.floor));
        assert_eq!(p.color(ClassSet::single(SemanticClass::EmptyInterior)), None);
    }
}
