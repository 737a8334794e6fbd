//! Procedural test surfaces: spheres, tori, cylinders, grids and a
//! genus-2 voxel slab. All meshes are consistently oriented with outward
//! normals.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};

use crate::mesh::TriMesh;

fn build(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> TriMesh {
    TriMesh::new(vertices, faces).expect("procedural mesh is valid")
}

/// Split quads `[a, b, c, d]` (counter-clockwise) into two triangles each.
fn split_quads(quads: &[[usize; 4]]) -> Vec<[usize; 3]> {
    quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect()
}

/// Subdivided icosahedron on a sphere of the given radius. Level 0 is the
/// icosahedron itself (20 faces); each level multiplies the count by 4.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriMesh {
    let (v, f) = icosphere_raw(subdivisions);
    build(v.into_iter().map(|u| Point3::from(u * radius)).collect(), f)
}

fn icosphere_raw(subdivisions: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::from(*c).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Icosphere whose radius is modulated by `1 + amplitude * g(u)`, where
/// `g(u) = cos(6 u_x) cos(6 u_y) cos(6 u_z)` is a smooth bump pattern with
/// `|g| <= 1` on the unit sphere.
pub fn bumpy_sphere(subdivisions: usize, radius: f64, amplitude: f64) -> TriMesh {
    let (v, f) = icosphere_raw(subdivisions);
    let v = v
        .into_iter()
        .map(|u| {
            let g = (6.0 * u.x).cos() * (6.0 * u.y).cos() * (6.0 * u.z).cos();
            Point3::from(u * radius * (1.0 + amplitude * g))
        })
        .collect();
    build(v, f)
}

/// Icosphere scaled to the ellipsoid with semi-axes `(a, b, c)`.
pub fn ellipsoid(subdivisions: usize, a: f64, b: f64, c: f64) -> TriMesh {
    let (v, f) = icosphere_raw(subdivisions);
    build(
        v.into_iter()
            .map(|u| Point3::new(a * u.x, b * u.y, c * u.z))
            .collect(),
        f,
    )
}

/// Torus around the z-axis with `n_major * n_minor * 2` faces.
pub fn uv_torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriMesh {
    let mut v = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let phi = TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let psi = TAU * j as f64 / n_minor as f64;
            let ring = major + minor * psi.cos();
            v.push(Point3::new(
                ring * phi.cos(),
                ring * phi.sin(),
                minor * psi.sin(),
            ));
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let quads: Vec<[usize; 4]> = (0..n_major)
        .flat_map(|i| {
            (0..n_minor).map(move |j| [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)])
        })
        .collect();
    build(v, split_quads(&quads))
}

/// Open cylinder of the given radius around the z-axis, spanning
/// `z in [-height / 2, height / 2]`.
pub fn open_cylinder(radius: f64, height: f64, n_around: usize, n_along: usize) -> TriMesh {
    let mut v = Vec::with_capacity(n_around * (n_along + 1));
    for i in 0..n_around {
        let phi = TAU * i as f64 / n_around as f64;
        for j in 0..=n_along {
            let z = -0.5 * height + height * j as f64 / n_along as f64;
            v.push(Point3::new(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    let idx = |i: usize, j: usize| (i % n_around) * (n_along + 1) + j;
    let quads: Vec<[usize; 4]> = (0..n_around)
        .flat_map(|i| {
            (0..n_along).map(move |j| [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)])
        })
        .collect();
    build(v, split_quads(&quads))
}

/// Planar `nx * ny` grid of squares of side `cell` in the z = 0 plane,
/// each split into two triangles (normal +z).
pub fn flat_grid(nx: usize, ny: usize, cell: f64) -> TriMesh {
    let (v, quads) = grid_quads(nx, ny, cell);
    build(v, split_quads(&quads))
}

/// Vertices and counter-clockwise quads of a planar grid.
pub fn grid_quads(nx: usize, ny: usize, cell: f64) -> (Vec<Point3<f64>>, Vec<[usize; 4]>) {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Point3::new(i as f64 * cell, j as f64 * cell, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let quads = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]))
        .collect();
    (v, quads)
}

/// Axis-aligned box with two triangles per side.
pub fn box_mesh(lo: [f64; 3], hi: [f64; 3]) -> TriMesh {
    let (v, quads) = box_quads(lo, hi);
    build(v, split_quads(&quads))
}

/// Corners and outward quads of an axis-aligned box.
pub fn box_quads(lo: [f64; 3], hi: [f64; 3]) -> (Vec<Point3<f64>>, Vec<[usize; 4]>) {
    let v = (0..8)
        .map(|i| {
            Point3::new(
                if i & 1 == 0 { lo[0] } else { hi[0] },
                if i & 2 == 0 { lo[1] } else { hi[1] },
                if i & 4 == 0 { lo[2] } else { hi[2] },
            )
        })
        .collect();
    let quads = vec![
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    (v, quads)
}

/// Closed surface of a union of unit voxels, each exposed voxel side split
/// into `resolution * resolution` squares and then into triangles.
pub fn voxel_surface(filled: &[[i64; 3]], resolution: usize) -> TriMesh {
    let set: std::collections::HashSet<[i64; 3]> = filled.iter().copied().collect();
    let s = resolution as i64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut verts = Vec::new();
    let mut vid = |p: [i64; 3], verts: &mut Vec<Point3<f64>>| -> usize {
        *index.entry(p).or_insert_with(|| {
            verts.push(Point3::new(
                p[0] as f64 / s as f64,
                p[1] as f64 / s as f64,
                p[2] as f64 / s as f64,
            ));
            verts.len() - 1
        })
    };
    // (normal axis, sign, in-plane axes u, v) with u x v pointing outward.
    let sides: [(usize, i64, usize, usize); 6] = [
        (0, -1, 2, 1),
        (0, 1, 1, 2),
        (1, -1, 0, 2),
        (1, 1, 2, 0),
        (2, -1, 1, 0),
        (2, 1, 0, 1),
    ];
    let mut quads = Vec::new();
    for cell in filled {
        for &(axis, sign, u, w) in &sides {
            let mut nb = *cell;
            nb[axis] += sign;
            if set.contains(&nb) {
                continue;
            }
            let mut base = [cell[0] * s, cell[1] * s, cell[2] * s];
            if sign > 0 {
                base[axis] += s;
            }
            for a in 0..s {
                for b in 0..s {
                    let corner = |da: i64, db: i64| {
                        let mut p = base;
                        p[u] += a + da;
                        p[w] += b + db;
                        p
                    };
                    quads.push([
                        vid(corner(0, 0), &mut verts),
                        vid(corner(1, 0), &mut verts),
                        vid(corner(1, 1), &mut verts),
                        vid(corner(0, 1), &mut verts),
                    ]);
                }
            }
        }
    }
    build(verts, split_quads(&quads))
}

/// A 5 x 3 x 1 voxel slab with two through-holes: a closed genus-2 surface.
pub fn genus2_slab(resolution: usize) -> TriMesh {
    let cells: Vec<[i64; 3]> = (0..5)
        .flat_map(|x| (0..3).map(move |y| [x, y, 0]))
        .filter(|&[x, y, _]| !(y == 1 && (x == 1 || x == 3)))
        .collect();
    voxel_surface(&cells, resolution)
}
