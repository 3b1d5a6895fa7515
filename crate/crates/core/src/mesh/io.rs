use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{TriangleMesh, Vec3, WELD_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    StlBinary,
    StlAscii,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from the extension and, for `.stl`, the content.
    /// A binary STL is recognised by its exact `84 + 50 * n` length.
    pub fn detect(path: &Path, bytes: &[u8]) -> MeshFormat {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if ext.as_deref() == Some("obj") {
            return MeshFormat::Obj;
        }
        if bytes.len() >= 84 {
            let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
            if bytes.len() == 84 + 50 * n {
                return MeshFormat::StlBinary;
            }
        }
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(512)]);
        if head.trim_start().starts_with("solid") {
            MeshFormat::StlAscii
        } else {
            MeshFormat::StlBinary
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stl-binary" => Ok(MeshFormat::StlBinary),
            "stl-ascii" => Ok(MeshFormat::StlAscii),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(Error::Parse(format!("unknown mesh format '{other}'"))),
        }
    }
}

/// Loads a mesh, welding vertices within 1e-6 mm and dropping degenerate
/// triangles. `format = None` auto-detects.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = format.unwrap_or_else(|| MeshFormat::detect(path, &bytes));
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    Ok(parse_mesh(&bytes, format)?.with_name(name))
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh> {
    let raw = match format {
        MeshFormat::StlBinary => parse_stl_binary(bytes)?,
        MeshFormat::StlAscii => parse_stl_ascii(bytes)?,
        MeshFormat::Obj => parse_obj(bytes)?,
    };
    let mesh = raw.cleaned(WELD_TOLERANCE);
    if mesh.triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(mesh)
}

fn soup(corners: Vec<Vec3>) -> TriangleMesh {
    let n = corners.len() as u32 / 3;
    let triangles = (0..n).map(|t| [3 * t, 3 * t + 1, 3 * t + 2]).collect();
    TriangleMesh::new(corners, triangles)
}

fn parse_stl_binary(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() < 84 {
        return Err(Error::Parse("binary STL shorter than its 84-byte header".into()));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let body = &bytes[84..];
    if body.len() < n * 50 {
        return Err(Error::Parse(format!(
            "binary STL declares {n} triangles but holds {} bytes of records",
            body.len()
        )));
    }
    let f = |rec: &[u8], k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
    let mut corners = Vec::with_capacity(3 * n);
    for rec in body.chunks_exact(50).take(n) {
        // Skip the stored normal (floats 0..3); it is recomputed from winding.
        for v in 0..3 {
            let base = 3 + 3 * v;
            corners.push(Vec3::new(f(rec, base), f(rec, base + 1), f(rec, base + 2)));
        }
    }
    Ok(soup(corners))
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse(format!("ASCII STL is not UTF-8: {e}")))?;
    let mut corners = Vec::new();
    let mut in_facet = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("facet") => in_facet = 0,
            Some("vertex") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| Error::Parse(format!("bad vertex on line {}", lineno + 1)))?;
                }
                corners.push(Vec3::new(c[0], c[1], c[2]));
                in_facet += 1;
            }
            Some("endfacet") if in_facet != 3 => {
                return Err(Error::Parse(format!(
                    "facet ending on line {} has {in_facet} vertices",
                    lineno + 1
                )));
            }
            _ => {}
        }
    }
    if corners.len() % 3 != 0 {
        return Err(Error::Parse("ASCII STL vertex count is not a multiple of 3".into()));
    }
    Ok(soup(corners))
}

fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| Error::Parse(format!("OBJ is not UTF-8: {e}")))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = || Error::Parse(format!("bad OBJ statement on line {}", lineno + 1));
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok.take(3).map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                if c.len() != 3 {
                    return Err(bad());
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| bad())?;
                    let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(bad());
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(bad());
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

/// Serialises a mesh as binary STL (80-byte header, u32 count, 50-byte records).
pub fn write_stl_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [0u8; 80];
    let label = format!("binary STL {}", mesh.name);
    let n = label.len().min(80);
    header[..n].copy_from_slice(&label.as_bytes()[..n]);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let cross = mesh.triangle_cross(t);
        let normal = if cross.norm() > 0.0 {
            cross.normalize()
        } else {
            Vec3::zeros()
        };
        let [a, b, c] = mesh.triangle(t);
        for v in [normal, a, b, c] {
            for k in 0..3 {
                out.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn write_binary_stl(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_stl_bytes(mesh)).map_err(|e| Error::io(path, e))
}
