//! Quality metrics for quad meshes: area and angle distortion, Jacobian
//! ratio, chamfer distance to a reference surface and irregular vertices.

use std::collections::{HashMap, HashSet};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use kdtree::KdTree;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::obj::ObjData;

/// Factor applied to the area and chamfer metrics.
pub const METRIC_SCALE: f64 = 1e4;
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    vertices: Vec<Point3<f64>>,
    quads: Vec<[usize; 4]>,
}

impl QuadMesh {
    pub fn new(vertices: Vec<Point3<f64>>, quads: Vec<[usize; 4]>) -> Result<Self> {
        for (i, q) in quads.iter().enumerate() {
            if let Some(&v) = q.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidQuad {
                    quad: i,
                    message: format!("vertex {v} out of range"),
                });
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if q[a] == q[b] {
                        return Err(Error::InvalidQuad {
                            quad: i,
                            message: format!("repeated vertex {}", q[a]),
                        });
                    }
                }
            }
        }
        Ok(Self { vertices, quads })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_obj(ObjData::read(path)?)
    }

    pub fn from_obj(data: ObjData) -> Result<Self> {
        let mut quads = Vec::with_capacity(data.faces.len());
        for (i, (line, f)) in data.faces.iter().enumerate() {
            if f.len() != 4 {
                return Err(Error::InvalidQuad {
                    quad: i,
                    message: format!("face at line {line} has {} vertices", f.len()),
                });
            }
            quads.push([f[0], f[1], f[2], f[3]]);
        }
        Self::new(data.vertices, quads)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn quads(&self) -> &[[usize; 4]] {
        &self.quads
    }

    fn corners(&self, q: usize) -> [Point3<f64>; 4] {
        self.quads[q].map(|i| self.vertices[i])
    }

    /// Half the norm of the cross product of the diagonals; exact for
    /// planar quads.
    pub fn quad_area(&self, q: usize) -> f64 {
        let [a, b, c, d] = self.corners(q);
        0.5 * (c - a).cross(&(d - b)).norm()
    }

    /// Newell normal of a possibly non-planar quad.
    pub fn quad_normal(&self, q: usize) -> Vector3<f64> {
        let p = self.corners(q);
        let mut n = Vector3::zeros();
        for i in 0..4 {
            let (u, v) = (p[i], p[(i + 1) % 4]);
            n.x += (u.y - v.y) * (u.z + v.z);
            n.y += (u.z - v.z) * (u.x + v.x);
            n.z += (u.x - v.x) * (u.y + v.y);
        }
        n.try_normalize(0.0).unwrap_or_else(Vector3::zeros)
    }

    /// Both triangles of every quad, split along the `0-2` diagonal.
    pub fn triangles(&self) -> Vec<[Point3<f64>; 3]> {
        self.quads
            .iter()
            .flat_map(|&[a, b, c, d]| {
                let v = &self.vertices;
                [[v[a], v[b], v[c]], [v[a], v[c], v[d]]]
            })
            .collect()
    }
}

fn require_quads(q: &QuadMesh) -> Result<()> {
    if q.quads.is_empty() {
        Err(Error::EmptyMesh)
    } else {
        Ok(())
    }
}

/// Population standard deviation of the quad areas, times 10^4.
pub fn area_distortion(q: &QuadMesh) -> Result<f64> {
    require_quads(q)?;
    let areas: Vec<f64> = (0..q.quads.len()).map(|i| q.quad_area(i)).collect();
    let n = areas.len() as f64;
    let mean = areas.iter().sum::<f64>() / n;
    let var = areas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() * METRIC_SCALE)
}

/// Root mean square deviation of every corner angle from a right angle,
/// in degrees.
pub fn angle_distortion(q: &QuadMesh) -> Result<f64> {
    require_quads(q)?;
    let mut sum = 0.0;
    for i in 0..q.quads.len() {
        let p = q.corners(i);
        for c in 0..4 {
            let a = p[(c + 1) % 4] - p[c];
            let b = p[(c + 3) % 4] - p[c];
            if a.norm() == 0.0 || b.norm() == 0.0 {
                return Err(Error::DegenerateCorner(i));
            }
            let phi = a.cross(&b).norm().atan2(a.dot(&b));
            sum += (phi - FRAC_PI_2).powi(2);
        }
    }
    Ok((sum / (4 * q.quads.len()) as f64).sqrt().to_degrees())
}

/// Min over max of the four signed corner Jacobians of one quad, clamped
/// to `[0, 1]`.
pub fn quad_jacobian_ratio(q: &QuadMesh, i: usize) -> f64 {
    let p = q.corners(i);
    let n = q.quad_normal(i);
    let dets: Vec<f64> = (0..4)
        .map(|c| {
            let a = p[(c + 1) % 4] - p[c];
            let b = p[(c + 3) % 4] - p[c];
            a.cross(&b).dot(&n)
        })
        .collect();
    let max = dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = dets.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min <= 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Mean Jacobian ratio over all quads.
pub fn jacobian_ratio(q: &QuadMesh) -> Result<f64> {
    require_quads(q)?;
    let n = q.quads.len();
    Ok((0..n).map(|i| quad_jacobian_ratio(q, i)).sum::<f64>() / n as f64)
}

/// `n` area-uniform samples over a triangle soup.
pub fn sample_triangles(tris: &[[Point3<f64>; 3]], n: usize, rng: &mut impl Rng) -> Vec<Point3<f64>> {
    let mut cdf = Vec::with_capacity(tris.len());
    let mut acc = 0.0;
    for [a, b, c] in tris {
        acc += 0.5 * (b - a).cross(&(c - a)).norm();
        cdf.push(acc);
    }
    if tris.is_empty() || acc <= 0.0 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let t = cdf.partition_point(|&c| c <= u).min(tris.len() - 1);
            let [a, b, c] = tris[t];
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - r2)) + c.coords * (s * r2))
        })
        .collect()
}

fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean L1 distance from every point of `from` to its nearest point in
/// `to`.
fn one_sided(from: &[Point3<f64>], to: &[Point3<f64>]) -> f64 {
    let mut tree = KdTree::with_capacity(3, 64);
    for (i, p) in to.iter().enumerate() {
        tree.add([p.x, p.y, p.z], i).expect("finite sample coordinates");
    }
    let total: f64 = from
        .iter()
        .map(|p| {
            tree.nearest(&[p.x, p.y, p.z], 1, &manhattan)
                .expect("finite sample coordinates")
                .first()
                .map_or(0.0, |(d, _)| *d)
        })
        .sum();
    total / from.len() as f64
}

/// Symmetric L1 chamfer distance between point sets: the average of the
/// two one-sided means.
pub fn chamfer_points(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    0.5 * (one_sided(a, b) + one_sided(b, a))
}

/// Chamfer distance between a quad mesh and a triangle mesh, times 10^4.
/// Both surfaces are sampled from the same seed, so identical
/// triangulations produce identical samples.
pub fn chamfer(q: &QuadMesh, reference: &TriMesh, n_samples: usize, seed: u64) -> Result<f64> {
    require_quads(q)?;
    if reference.face_count() == 0 || n_samples == 0 {
        return Err(Error::EmptyMesh);
    }
    let ref_tris: Vec<_> = (0..reference.face_count()).map(|f| reference.triangle(f)).collect();
    let a = sample_triangles(&q.triangles(), n_samples, &mut ChaCha8Rng::seed_from_u64(seed));
    let b = sample_triangles(&ref_tris, n_samples, &mut ChaCha8Rng::seed_from_u64(seed));
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMesh);
    }
    Ok(chamfer_points(&a, &b) * METRIC_SCALE)
}

/// Edge valence of every vertex and whether it lies on the boundary.
pub fn valences(q: &QuadMesh) -> Result<(Vec<usize>, Vec<bool>)> {
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for quad in &q.quads {
        for c in 0..4 {
            let (a, b) = (quad[c], quad[(c + 1) % 4]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut valence = vec![0; q.vertices.len()];
    let mut boundary = vec![false; q.vertices.len()];
    for (&(a, b), &count) in &edges {
        if count > 2 {
            return Err(Error::NonManifoldEdge { a, b, count });
        }
        valence[a] += 1;
        valence[b] += 1;
        if count == 1 {
            boundary[a] = true;
            boundary[b] = true;
        }
    }
    Ok((valence, boundary))
}

/// Interior vertices of valence other than 4, plus boundary vertices of
/// valence other than 2 (corner) or 3.
pub fn count_irregular(q: &QuadMesh) -> Result<usize> {
    let (valence, boundary) = valences(q)?;
    let used: HashSet<usize> = q.quads.iter().flatten().copied().collect();
    Ok(used
        .into_iter()
        .filter(|&v| {
            if boundary[v] {
                !(2..=3).contains(&valence[v])
            } else {
                valence[v] != 4
            }
        })
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub area: f64,
    pub angle: f64,
    pub sings: usize,
    pub cd: f64,
    pub jr: f64,
}

pub fn evaluate(q: &QuadMesh, reference: &TriMesh, n_samples: usize, seed: u64) -> Result<MetricsReport> {
    Ok(MetricsReport {
        area: area_distortion(q)?,
        angle: angle_distortion(q)?,
        sings: count_irregular(q)?,
        cd: chamfer(q, reference, n_samples, seed)?,
        jr: jacobian_ratio(q)?,
    })
}
