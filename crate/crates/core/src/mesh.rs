//! Indexed triangle meshes with per-face frames, adjacency and dihedral
//! rotations.
//!
//! A [`TriMesh`] is immutable once built. Construction validates the
//! topology (triangles only, at most two faces per edge, no zero-area
//! faces) and precomputes everything the losses and the field analysis
//! need: unit normals, centroids, areas, a local tangent frame per face and,
//! for every interior edge, the rotation about that edge carrying the
//! neighbor's tangent plane onto the face's own.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::obj::ObjData;

/// Orthonormal tangent frame of a face, with `mu × nu = normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub mu: Vector3<f64>,
    pub nu: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl LocalFrame {
    /// Frame whose first axis is the normalized first edge `v1 - v0` of the
    /// face and whose second axis completes a right-handed basis.
    pub fn from_triangle(v: [Point3<f64>; 3]) -> Option<Self> {
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let normal = e1.cross(&e2).try_normalize(0.0)?;
        let mu = e1.try_normalize(0.0)?;
        let nu = normal.cross(&mu);
        Some(Self { mu, nu, normal })
    }

    /// Angle of a tangent vector measured counter-clockwise from `mu`.
    pub fn angle_of(&self, v: &Vector3<f64>) -> f64 {
        v.dot(&self.nu).atan2(v.dot(&self.mu))
    }
}

/// Data attached to one edge slot of a face: slot `i` is the edge
/// `(face[i], face[(i + 1) % 3])`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeLink {
    pub neighbor: usize,
    /// Maps vectors in the neighbor's tangent plane into this face's plane.
    pub rotation: Matrix3<f64>,
    /// Signed dihedral angle between the neighbor normal and this normal.
    pub dihedral: f64,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    face_normal: Vec<Vector3<f64>>,
    centroid: Vec<Point3<f64>>,
    face_area: Vec<f64>,
    frames: Vec<LocalFrame>,
    links: Vec<[Option<EdgeLink>; 3]>,
}

/// Uniform scale and translation applied by [`TriMesh::normalize`]:
/// `normalized = (original - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub center: Point3<f64>,
    pub scale: f64,
}

impl TriMesh {
    /// Build a mesh from vertex positions and 0-based triangles.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Config(format!(
                    "face {fi} references a vertex out of range"
                )));
            }
        }

        let mut face_normal = Vec::with_capacity(faces.len());
        let mut centroid = Vec::with_capacity(faces.len());
        let mut face_area = Vec::with_capacity(faces.len());
        let mut frames = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            let p = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
            let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let longest = (p[1] - p[0])
                .norm_squared()
                .max((p[2] - p[1]).norm_squared())
                .max((p[0] - p[2]).norm_squared());
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || cross.norm() <= 1e-14 * longest {
                return Err(Error::DegenerateFace(fi));
            }
            let frame = LocalFrame::from_triangle(p).ok_or(Error::DegenerateFace(fi))?;
            face_normal.push(frame.normal);
            frames.push(frame);
            face_area.push(0.5 * cross.norm());
            centroid.push(Point3::from((p[0].coords + p[1].coords + p[2].coords) / 3.0));
        }

        let mut edge_faces: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for slot in 0..3 {
                let key = edge_key(f[slot], f[(slot + 1) % 3]);
                edge_faces.entry(key).or_default().push((fi, slot));
            }
        }

        let mut links = vec![[None; 3]; faces.len()];
        for (fi, f) in faces.iter().enumerate() {
            for slot in 0..3 {
                let key = edge_key(f[slot], f[(slot + 1) % 3]);
                let incident = &edge_faces[&key];
                if incident.len() > 2 {
                    return Err(Error::NonManifoldEdge {
                        a: key.0,
                        b: key.1,
                        count: incident.len(),
                    });
                }
                let Some(&(other, _)) = incident.iter().find(|(g, _)| *g != fi) else {
                    continue;
                };
                let axis = vertices[key.1] - vertices[key.0];
                let (rotation, dihedral) =
                    dihedral_rotation(&axis, &face_normal[other], &face_normal[fi]);
                links[fi][slot] = Some(EdgeLink {
                    neighbor: other,
                    rotation,
                    dihedral,
                });
            }
        }

        Ok(Self {
            vertices,
            faces,
            face_normal,
            centroid,
            face_area,
            frames,
            links,
        })
    }

    /// Load a triangle mesh from an ASCII OBJ file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_obj(ObjData::read(path)?)
    }

    pub fn from_obj(data: ObjData) -> Result<Self> {
        let mut faces = Vec::with_capacity(data.faces.len());
        for (line, f) in data.faces {
            if f.len() != 3 {
                return Err(Error::NonTriangularFace {
                    line,
                    count: f.len(),
                });
            }
            faces.push([f[0], f[1], f[2]]);
        }
        Self::new(data.vertices, faces)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normal
    }

    pub fn centroids(&self) -> &[Point3<f64>] {
        &self.centroid
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_area
    }

    pub fn frames(&self) -> &[LocalFrame] {
        &self.frames
    }

    /// Edge slots of `face`; `None` marks a boundary edge.
    pub fn links(&self, face: usize) -> &[Option<EdgeLink>; 3] {
        &self.links[face]
    }

    /// Neighboring faces of `face` in edge-slot order, boundary edges skipped.
    pub fn neighbors(&self, face: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[face].iter().flatten().map(|l| l.neighbor)
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Rotation about the edge shared by `face` and `neighbor` that maps the
    /// neighbor's normal onto the face's normal.
    pub fn edge_rotation(&self, face: usize, neighbor: usize) -> Result<Matrix3<f64>> {
        self.links
            .get(face)
            .and_then(|slots| slots.iter().flatten().find(|l| l.neighbor == neighbor))
            .map(|l| l.rotation)
            .ok_or(Error::NotAdjacent(face, neighbor))
    }

    pub fn total_area(&self) -> f64 {
        self.face_area.iter().sum()
    }

    /// Axis-aligned bounding box over the vertices referenced by faces.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for f in &self.faces {
            for &v in f {
                let p = self.vertices[v];
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        (lo, hi)
    }

    /// Transform that centers the bounding box at the origin and scales its
    /// longest side to length 1.
    pub fn normalization(&self) -> Result<Normalization> {
        let (lo, hi) = self.bounding_box();
        let extent = (hi - lo).max();
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::ZeroExtent);
        }
        Ok(Normalization {
            center: nalgebra::center(&lo, &hi),
            scale: 1.0 / extent,
        })
    }

    /// Copy of the mesh mapped into `[-0.5, 0.5]^3` by a uniform scale and
    /// translation.
    pub fn normalize(&self) -> Result<Self> {
        let t = self.normalization()?;
        self.transformed(&t)
    }

    pub fn transformed(&self, t: &Normalization) -> Result<Self> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| Point3::from((p - t.center) * t.scale))
            .collect();
        Self::new(vertices, self.faces.clone())
    }

    /// Euler characteristic `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for slot in 0..3 {
                used[f[slot]] = true;
                edges.insert(edge_key(f[slot], f[(slot + 1) % 3]));
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - edges.len() as i64 + self.faces.len() as i64
    }

    pub fn is_closed(&self) -> bool {
        self.links.iter().all(|slots| slots.iter().all(Option::is_some))
    }

    /// Interior angle of `face` at its local corner `corner` (0, 1 or 2).
    pub fn corner_angle(&self, face: usize, corner: usize) -> f64 {
        let p = self.triangle(face);
        let a = p[(corner + 1) % 3] - p[corner];
        let b = p[(corner + 2) % 3] - p[corner];
        a.cross(&b).norm().atan2(a.dot(&b))
    }

    /// Faces around `vertex` in counter-clockwise order (seen from the
    /// side the normals point to).
    pub fn one_ring(&self, vertex: usize) -> Result<OneRing> {
        let incident: Vec<(usize, usize)> = self
            .faces
            .iter()
            .enumerate()
            .filter_map(|(fi, f)| f.iter().position(|&v| v == vertex).map(|c| (fi, c)))
            .collect();
        self.walk_ring(vertex, &incident)
    }

    pub(crate) fn walk_ring(&self, vertex: usize, incident: &[(usize, usize)]) -> Result<OneRing> {
        if incident.is_empty() {
            return Err(Error::NonDiskOneRing(vertex));
        }
        // Moving counter-clockwise around `vertex` leaves face (v, a, b)
        // through edge (v, b): slot (corner + 2) % 3.
        let next = |face: usize, corner: usize| -> Option<usize> {
            self.links[face][(corner + 2) % 3].map(|l| l.neighbor)
        };
        let prev = |face: usize, corner: usize| -> Option<usize> {
            self.links[face][corner].map(|l| l.neighbor)
        };
        let corner_of = |face: usize| -> Option<usize> {
            incident.iter().find(|(f, _)| *f == face).map(|&(_, c)| c)
        };

        // Rewind to the first face of an open fan, if any.
        let (mut start, mut start_corner) = incident[0];
        let mut closed = true;
        for _ in 0..incident.len() {
            match prev(start, start_corner).and_then(|g| corner_of(g).map(|c| (g, c))) {
                Some((g, c)) if g != incident[0].0 => {
                    start = g;
                    start_corner = c;
                }
                Some(_) => break,
                None => {
                    closed = false;
                    break;
                }
            }
        }

        let mut ring = vec![start];
        let (mut face, mut corner) = (start, start_corner);
        loop {
            match next(face, corner).and_then(|g| corner_of(g).map(|c| (g, c))) {
                Some((g, _)) if g == start => break,
                Some((g, c)) => {
                    if ring.contains(&g) {
                        return Err(Error::NonDiskOneRing(vertex));
                    }
                    ring.push(g);
                    face = g;
                    corner = c;
                }
                None => {
                    if closed {
                        return Err(Error::NonDiskOneRing(vertex));
                    }
                    break;
                }
            }
        }
        if ring.len() != incident.len() {
            return Err(Error::NonDiskOneRing(vertex));
        }
        let corners = ring.iter().map(|&f| corner_of(f).unwrap_or(0)).collect();
        Ok(OneRing {
            faces: ring,
            corners,
            closed,
        })
    }

    /// Incident (face, corner) pairs for every vertex.
    pub(crate) fn vertex_incidence(&self) -> Vec<Vec<(usize, usize)>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for (c, &v) in f.iter().enumerate() {
                inc[v].push((fi, c));
            }
        }
        inc
    }
}

/// Ordered fan of faces around a vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneRing {
    pub faces: Vec<usize>,
    /// Local corner index of the vertex within each face of `faces`.
    pub corners: Vec<usize>,
    /// `false` for boundary vertices, whose fan is open.
    pub closed: bool,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rotation about `axis` taking unit vector `from` to unit vector `to`,
/// both assumed orthogonal to the axis, and its signed angle.
fn dihedral_rotation(
    axis: &Vector3<f64>,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
) -> (Matrix3<f64>, f64) {
    let axis = Unit::new_normalize(*axis);
    let angle = from.cross(to).dot(&axis).atan2(from.dot(to));
    let angle = if angle <= -PI { PI } else { angle };
    (Rotation3::from_axis_angle(&axis, angle).into_inner(), angle)
}
