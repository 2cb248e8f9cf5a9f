//! Mesh and point-set file formats: binary little-endian PLY, ASCII OBJ and CSV.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

// ---------------------------------------------------------------- PLY

/// Per-vertex scalar written next to the geometry, also rendered as a colour ramp.
#[derive(Debug, Clone, Default)]
pub struct VertexScalars {
    pub name: String,
    pub values: Vec<f64>,
    /// Value mapped to the hot end of the colour ramp.
    pub max: f64,
}

pub fn ply_bytes(mesh: &TriMesh, scalars: Option<&VertexScalars>) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", mesh.vertices().len());
    header += "property double x\nproperty double y\nproperty double z\n";
    if let Some(s) = scalars {
        header += &format!("property float {}\n", s.name);
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    header += &format!("element face {}\n", mesh.faces().len());
    header += "property list uchar int vertex_indices\nend_header\n";
    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices().iter().enumerate() {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(s) = scalars {
            let x = s.values[i];
            out.extend_from_slice(&(x as f32).to_le_bytes());
            out.extend_from_slice(&heat_color(x, s.max));
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

/// Blue (0) through green to red (`max` and above).
fn heat_color(x: f64, max: f64) -> [u8; 3] {
    let t = if max > 0.0 { (x / max).clamp(0.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t < 0.5 {
        (0.0, 2.0 * t, 1.0 - 2.0 * t)
    } else {
        (2.0 * t - 1.0, 2.0 - 2.0 * t, 0.0)
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

pub fn write_ply(path: &Path, mesh: &TriMesh, scalars: Option<&VertexScalars>) -> Result<()> {
    fs::write(path, ply_bytes(mesh, scalars)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(s: &str) -> Option<Self> {
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
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn scalar(&mut self, t: Scalar) -> Option<f64> {
        let b = self.take(t.size())?;
        Some(match t {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().ok()?),
        })
    }
}

/// Parse a binary little-endian PLY mesh (triangles; larger polygons are fanned).
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<TriMesh> {
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let end = b"end_header\n";
    let header_end = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("missing end_header"))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => return Err(bad(&format!("unsupported PLY format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| bad("bad list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| bad("bad list item type"))?;
                e.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", t, name] => {
                let e = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let t = Scalar::parse(t).ok_or_else(|| bad("bad property type"))?;
                e.props.push(Property::Scalar(name.to_string(), t));
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            _ => return Err(bad(&format!("unrecognised header line `{line}`"))),
        }
    }
    let mut cur = Cursor {
        bytes,
        pos: header_end,
    };
    let truncated = || bad("truncated body");
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for e in &elements {
        for _ in 0..e.count {
            let mut v = [f64::NAN; 3];
            for p in &e.props {
                match p {
                    Property::Scalar(name, t) => {
                        let x = cur.scalar(*t).ok_or_else(truncated)?;
                        if e.name == "vertex" {
                            match name.as_str() {
                                "x" => v[0] = x,
                                "y" => v[1] = x,
                                "z" => v[2] = x,
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = cur.scalar(*ct).ok_or_else(truncated)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(cur.scalar(*it).ok_or_else(truncated)? as usize);
                        }
                        if e.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(bad("face with fewer than 3 vertices"));
                            }
                            for t in 1..n - 1 {
                                faces.push([idx[0], idx[t], idx[t + 1]]);
                            }
                        }
                    }
                }
            }
            if e.name == "vertex" {
                if v.iter().any(|c| c.is_nan()) {
                    return Err(bad("vertex element lacks x/y/z"));
                }
                vertices.push(v);
            }
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| bad(&e.to_string()))
}

pub fn read_ply(path: &Path) -> Result<TriMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}

// ---------------------------------------------------------------- OBJ

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut s = String::new();
    for v in mesh.vertices() {
        s += &format!("v {} {} {}\n", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        s += &format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::format(path, format!("line {}: {m}", ln + 1));
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| bad("bad face index"))?;
                        let n = vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 {
                            return Err(bad("face index out of range"));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs 3 indices"));
                }
                for t in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[t], idx[t + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| Error::format(path, e.to_string()))
}

/// Read a mesh, choosing the format from the file extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_deref() {
        Some("ply") => read_ply(path),
        Some("obj") => read_obj(path),
        _ => Err(Error::format(path, "unknown mesh extension (expected .ply or .obj)")),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_deref() {
        Some("ply") => write_ply(path, mesh, None),
        Some("obj") => write_obj(path, mesh),
        _ => Err(Error::format(path, "unknown mesh extension (expected .ply or .obj)")),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

// ---------------------------------------------------------------- CSV

/// Write `x,y,z` rows, or `x,y,z,dx,dy,dz` when displacements are given.
pub fn write_points_csv(path: &Path, points: &[Vec3], disp: Option<&[Vec3]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: &[&str] = if disp.is_some() {
        &["x", "y", "z", "dx", "dy", "dz"]
    } else {
        &["x", "y", "z"]
    };
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if let Some(d) = disp {
            rec.extend(d[i].iter().map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Points (and displacements when the file carries `dx,dy,dz`).
pub type PointsAndDisp = (Vec<Vec3>, Option<Vec<Vec3>>);

pub fn read_points_csv(path: &Path) -> Result<PointsAndDisp> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let has_disp = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "dx", "dy", "dz"] => true,
        _ => return Err(Error::format(path, format!("unexpected CSV header {header:?}"))),
    };
    let mut pts = Vec::new();
    let mut disp = Vec::new();
    for (ln, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("row {}: bad number", ln + 2)))?;
        pts.push([vals[0], vals[1], vals[2]]);
        if has_disp {
            disp.push([vals[3], vals[4], vals[5]]);
        }
    }
    Ok((pts, has_disp.then_some(disp)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tet() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0 / 3.0]],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn ply_obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = tet();
        let p = dir.path().join("m.ply");
        write_ply(&p, &m, None).unwrap();
        assert_eq!(read_ply(&p).unwrap(), m);
        let o = dir.path().join("m.obj");
        write_obj(&o, &m).unwrap();
        assert_eq!(read_obj(&o).unwrap(), m);
    }

    #[test]
    fn ply_with_scalars_reads_geometry() {
        let m = tet();
        let s = VertexScalars {
            name: "error".into(),
            values: vec![0.0, 0.5, 1.0, 2.0],
            max: 1.0,
        };
        let bytes = ply_bytes(&m, Some(&s));
        assert_eq!(parse_ply(&bytes, Path::new("x.ply")).unwrap(), m);
        assert_eq!(heat_color(0.0, 1.0), [0, 0, 255]);
        assert_eq!(heat_color(5.0, 1.0), [255, 0, 0]);
    }

    #[test]
    fn ply_rejects_garbage() {
        assert!(parse_ply(b"hello", Path::new("x")).is_err());
        let mut bytes = ply_bytes(&tet(), None);
        bytes.truncate(bytes.len() - 3);
        assert!(parse_ply(&bytes, Path::new("x")).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let pts = vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.0, 1e-17]];
        let d = vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        write_points_csv(&p, &pts, Some(&d)).unwrap();
        let (rp, rd) = read_points_csv(&p).unwrap();
        assert_eq!(rp, pts);
        assert_eq!(rd.unwrap(), d);
        write_points_csv(&p, &pts, None).unwrap();
        assert!(read_points_csv(&p).unwrap().1.is_none());
    }
}
