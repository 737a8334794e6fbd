//! Sharp feature polylines and the per-face weights derived from them.
//!
//! Lines are chains of mesh vertex indices. They come from `l` records,
//! either inside the mesh OBJ or in a separate file whose indices refer to
//! the mesh's vertices, or from a dihedral-angle threshold.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub const DEFAULT_RHO: f64 = 10.0;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureLines {
    pub polylines: Vec<Vec<usize>>,
}

impl FeatureLines {
    pub fn new(polylines: Vec<Vec<usize>>) -> Self {
        Self { polylines }
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|l| l.len() < 2)
    }

    /// Reads `l` records from a file; all other records are ignored.
    pub fn load(path: impl AsRef<Path>, vertex_count: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vertex_count)
    }

    pub fn parse(text: &str, vertex_count: usize) -> Result<Self> {
        let mut polylines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut tok = line.split_whitespace();
            if tok.next() != Some("l") {
                continue;
            }
            let mut chain = Vec::new();
            for t in tok {
                let head = t.split('/').next().unwrap_or("");
                let idx: usize = head
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("invalid index `{t}`")))?;
                if idx == 0 || idx > vertex_count {
                    return Err(Error::parse(i + 1, format!("index {idx} out of range")));
                }
                chain.push(idx - 1);
            }
            if chain.len() >= 2 {
                polylines.push(chain);
            }
        }
        Ok(Self { polylines })
    }

    /// Every edge whose adjacent normals differ by more than
    /// `threshold_deg`, as a two-vertex polyline.
    pub fn detect_sharp(mesh: &TriMesh, threshold_deg: f64) -> Self {
        let thr = threshold_deg.to_radians();
        let mut polylines = Vec::new();
        for (f, face) in mesh.faces().iter().enumerate() {
            for (slot, link) in mesh.links(f).iter().enumerate() {
                if let Some(l) = link {
                    // Report each edge once.
                    if l.neighbor > f && l.dihedral.abs() > thr {
                        polylines.push(vec![face[slot], face[(slot + 1) % 3]]);
                    }
                }
            }
        }
        Self { polylines }
    }

    fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.polylines
            .iter()
            .flat_map(|l| l.windows(2).map(|w| (w[0], w[1])))
    }
}

/// Per-face feature data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights {
    /// Straight-line distance from each centroid to the nearest line.
    pub distance: Vec<f64>,
    /// `1 - exp(-rho * distance)`.
    pub weight: Vec<f64>,
    /// Prescribed angle on faces with an edge on a line: the edge tangent
    /// expressed in the face frame.
    pub constrained: Vec<Option<f64>>,
}

impl FeatureWeights {
    /// No lines: unit weights and no constraints.
    pub fn none(faces: usize) -> Self {
        Self {
            distance: vec![f64::INFINITY; faces],
            weight: vec![1.0; faces],
            constrained: vec![None; faces],
        }
    }

    pub fn constrained_count(&self) -> usize {
        self.constrained.iter().filter(|c| c.is_some()).count()
    }
}

fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

pub fn feature_weights(mesh: &TriMesh, lines: &FeatureLines, rho: f64) -> Result<FeatureWeights> {
    let n = mesh.face_count();
    if lines.is_empty() {
        return Ok(FeatureWeights::none(n));
    }
    let nv = mesh.vertices().len();
    let segs: Vec<(usize, usize)> = lines.segments().collect();
    if let Some(&(a, b)) = segs.iter().find(|(a, b)| *a >= nv || *b >= nv) {
        return Err(Error::Config(format!(
            "feature segment ({a}, {b}) references a vertex outside the mesh"
        )));
    }
    let v = mesh.vertices();
    let mut edge_dir: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for &(a, b) in &segs {
        edge_dir.insert((a.min(b), a.max(b)), (a, b));
    }
    let mut distance = Vec::with_capacity(n);
    let mut constrained = vec![None; n];
    for (f, out) in constrained.iter_mut().enumerate() {
        let c = mesh.centroids()[f];
        let d = segs
            .iter()
            .map(|&(a, b)| point_segment_distance(&c, &v[a], &v[b]))
            .fold(f64::INFINITY, f64::min);
        distance.push(d);
        let face = mesh.faces()[f];
        for slot in 0..3 {
            let (x, y) = (face[slot], face[(slot + 1) % 3]);
            if let Some(&(a, b)) = edge_dir.get(&(x.min(y), x.max(y))) {
                let t = v[b] - v[a];
                *out = Some(mesh.frames()[f].angle_of(&t));
                break;
            }
        }
    }
    let weight = distance.iter().map(|d| 1.0 - (-rho * d).exp()).collect();
    Ok(FeatureWeights {
        distance,
        weight,
        constrained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn parse_and_range_check() {
        let fl = FeatureLines::parse("# lines\nl 1 2 3\nv 0 0 0\nl 4\n", 4).unwrap();
        assert_eq!(fl.polylines, vec![vec![0, 1, 2]]);
        assert!(FeatureLines::parse("l 1 9\n", 4).is_err());
    }

    #[test]
    fn box_edges_are_sharp() {
        let m = shapes::box_mesh([0.0; 3], [1.0; 3]);
        let fl = FeatureLines::detect_sharp(&m, 30.0);
        assert_eq!(fl.polylines.len(), 12);
    }

    #[test]
    fn weights_vanish_on_lines_and_stay_below_one() {
        let m = shapes::box_mesh([-0.5; 3], [0.5; 3]);
        let fl = FeatureLines::detect_sharp(&m, 30.0);
        let w = feature_weights(&m, &fl, DEFAULT_RHO).unwrap();
        assert!(w.weight.iter().all(|d| (0.0..1.0).contains(d)));
        // Every box face triangle touches a cube edge.
        assert_eq!(w.constrained_count(), m.face_count());
        for f in 0..m.face_count() {
            let theta = w.constrained[f].unwrap();
            let (a, _) = crate::angle::cross_from_theta(theta, &m.frames()[f]);
            // Cube edges are axis-aligned.
            assert!((a.abs().max() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_distance_gives_zero_weight() {
        // Degenerate segment placed at a centroid.
        let m = shapes::flat_grid(2, 2, 1.0);
        let c = m.centroids()[0];
        let d = point_segment_distance(&c, &c, &c);
        assert_eq!(1.0 - (-DEFAULT_RHO * d).exp(), 0.0);
    }

    #[test]
    fn no_lines_means_unit_weight() {
        let m = shapes::icosphere(0, 1.0);
        let w = feature_weights(&m, &FeatureLines::default(), DEFAULT_RHO).unwrap();
        assert!(w.weight.iter().all(|&d| d == 1.0));
        assert_eq!(w.constrained_count(), 0);
    }
}
