//! Minimal ASCII Wavefront OBJ reader and writer.
//!
//! Only `v`, `f` and `l` records are interpreted; everything else
//! (normals, texture coordinates, groups, materials) is skipped. Indices
//! are 1-based in the file and 0-based in memory; negative (relative)
//! indices are resolved against the vertices read so far.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Raw contents of an OBJ file before any topology is built.
#[derive(Debug, Clone, Default)]
pub struct ObjData {
    pub vertices: Vec<Point3<f64>>,
    /// Polygon faces with the source line number of each record.
    pub faces: Vec<(usize, Vec<usize>)>,
    /// Polylines from `l` records.
    pub lines: Vec<Vec<usize>>,
}

impl ObjData {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut data = ObjData::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut tokens = line.split_whitespace();
            let Some(tag) = tokens.next() else { continue };
            match tag {
                "v" => {
                    let mut xyz = [0.0f64; 3];
                    for c in xyz.iter_mut() {
                        let tok = tokens
                            .next()
                            .ok_or_else(|| Error::parse(line_no, "vertex needs 3 coordinates"))?;
                        *c = tok.parse().map_err(|_| {
                            Error::parse(line_no, format!("invalid coordinate `{tok}`"))
                        })?;
                        if !c.is_finite() {
                            return Err(Error::parse(line_no, "non-finite coordinate"));
                        }
                    }
                    data.vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
                }
                "f" | "l" => {
                    let mut idx = Vec::new();
                    for tok in tokens {
                        idx.push(resolve_index(tok, data.vertices.len(), line_no)?);
                    }
                    if tag == "f" {
                        if idx.len() < 3 {
                            return Err(Error::parse(line_no, "face needs at least 3 vertices"));
                        }
                        data.faces.push((line_no, idx));
                    } else if idx.len() >= 2 {
                        data.lines.push(idx);
                    }
                }
                _ => {}
            }
        }
        Ok(data)
    }
}

fn resolve_index(token: &str, vertex_count: usize, line: usize) -> Result<usize> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid index `{token}`")))?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err(Error::parse(line, "index 0 is not valid in OBJ"));
    };
    if resolved < 0 || resolved as usize >= vertex_count {
        return Err(Error::parse(line, format!("index {raw} out of range")));
    }
    Ok(resolved as usize)
}

/// Serialize vertices and polygon faces (0-based) to OBJ text.
pub fn to_obj_string<const N: usize>(vertices: &[Point3<f64>], faces: &[[usize; N]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 40 + faces.len() * 24);
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in faces {
        out.push('f');
        for i in f {
            let _ = write!(out, " {}", i + 1);
        }
        out.push('\n');
    }
    out
}

pub fn write_obj<const N: usize>(
    path: impl AsRef<Path>,
    vertices: &[Point3<f64>],
    faces: &[[usize; N]],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_obj_string(vertices, faces)).map_err(|e| Error::io(path, e))
}
