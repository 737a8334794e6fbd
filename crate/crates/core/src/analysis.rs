//! Field analysis: singularity indices, alignment against analytic
//! principal directions, and the plain-text field exchange format.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::CrossField;
use crate::diff::JetOrder;
use crate::error::{Error, Result};
use crate::losses::{loss_align_normal, loss_dirichlet, loss_eikonal};
use crate::mesh::TriMesh;
use crate::sampling::{build_omega, build_p};
use crate::sdf::SdfModel;

/// Reduce an angle to the representative in `(-pi/4, pi/4]`.
pub fn reduce_quarter(x: f64) -> f64 {
    let mut r = x - FRAC_PI_2 * (x / FRAC_PI_2).round();
    if r <= -FRAC_PI_4 {
        r += FRAC_PI_2;
    } else if r > FRAC_PI_4 {
        r -= FRAC_PI_2;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub vertex: usize,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    /// Index of every vertex in quarter turns; `None` on boundary and
    /// unreferenced vertices.
    #[serde(skip)]
    pub quarters: Vec<Option<i64>>,
    pub singularities: Vec<Singularity>,
    pub singularity_count: usize,
    pub total_index: f64,
    pub euler_characteristic: i64,
    pub boundary_vertices: Vec<usize>,
}

impl SingularityReport {
    pub fn index(&self, vertex: usize) -> Option<f64> {
        self.quarters.get(vertex).copied().flatten().map(|q| q as f64 / 4.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Angle in `to`'s frame by which the cross of `to` differs from the cross
/// of `from` carried across their shared edge, reduced modulo a quarter
/// turn.
fn matching_defect(field: &CrossField, mesh: &TriMesh, from: usize, to: usize) -> Result<f64> {
    let r = mesh.edge_rotation(to, from)?;
    let carried = r * field.alpha[from];
    let phi = mesh.frames()[to].angle_of(&carried);
    Ok(reduce_quarter(field.theta[to] - phi))
}

/// Per-vertex 4-RoSy index from the counter-clockwise one-ring walk.
/// Interior vertices get `(sum of defects + angle deficit) / 2pi`, rounded
/// to the nearest quarter.
pub fn singularities(field: &CrossField, mesh: &TriMesh) -> Result<SingularityReport> {
    if field.len() != mesh.face_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.face_count(),
            got: field.len(),
        });
    }
    let incidence = mesh.vertex_incidence();
    let mut quarters = vec![None; incidence.len()];
    let mut boundary_vertices = Vec::new();
    for (v, inc) in incidence.iter().enumerate() {
        if inc.is_empty() {
            continue;
        }
        let ring = mesh.walk_ring(v, inc)?;
        if !ring.closed {
            boundary_vertices.push(v);
            continue;
        }
        let m = ring.faces.len();
        let mut total = TAU;
        for i in 0..m {
            let (f, g) = (ring.faces[i], ring.faces[(i + 1) % m]);
            total += matching_defect(field, mesh, f, g)?;
            total -= mesh.corner_angle(f, ring.corners[i]);
        }
        quarters[v] = Some((total / FRAC_PI_2).round() as i64);
    }
    let singularities: Vec<Singularity> = quarters
        .iter()
        .enumerate()
        .filter_map(|(vertex, q)| match q {
            Some(q) if *q != 0 => Some(Singularity {
                vertex,
                index: *q as f64 / 4.0,
            }),
            _ => None,
        })
        .collect();
    let total_q: i64 = quarters.iter().flatten().sum();
    Ok(SingularityReport {
        singularity_count: singularities.len(),
        singularities,
        total_index: total_q as f64 / 4.0,
        euler_characteristic: mesh.euler_characteristic(),
        boundary_vertices,
        quarters,
    })
}

/// `ROSY 4 <n>` followed by one line per face: alpha then beta.
pub fn field_to_string(field: &CrossField) -> String {
    let mut out = String::with_capacity(16 + field.len() * 100);
    let _ = writeln!(out, "ROSY 4 {}", field.len());
    for (a, b) in field.alpha.iter().zip(&field.beta) {
        let _ = writeln!(
            out,
            "{:.8e} {:.8e} {:.8e} {:.8e} {:.8e} {:.8e}",
            a.x, a.y, a.z, b.x, b.y, b.z
        );
    }
    out
}

pub fn export_field(field: &CrossField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, field_to_string(field)).map_err(|e| Error::io(path, e))
}

/// Per-face `(alpha, beta)` pairs read back from the exchange format.
pub fn parse_field(text: &str) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty field file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let n: usize = match head.as_slice() {
        ["ROSY", "4", n] => n.parse().map_err(|_| Error::parse(1, "bad face count"))?,
        _ => return Err(Error::parse(1, "expected `ROSY 4 <count>` header")),
    };
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(i + 1, "invalid number"))?;
        if vals.len() != 6 {
            return Err(Error::parse(i + 1, format!("expected 6 values, got {}", vals.len())));
        }
        out.push((
            Vector3::new(vals[0], vals[1], vals[2]),
            Vector3::new(vals[3], vals[4], vals[5]),
        ));
    }
    if out.len() != n {
        return Err(Error::parse(
            out.len() + 1,
            format!("header announces {n} faces, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn import_field(path: impl AsRef<Path>) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text)
}

/// Closed-form principal directions for test surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Oracle {
    /// Torus of revolution about the z-axis: the parallels.
    Torus,
    /// Cylinder about the given axis through the origin: the rulings.
    Cylinder { axis: [f64; 3] },
    /// Ellipsoid `(x/a)^2 + (y/b)^2 + (z/c)^2 = 1`: the direction of the
    /// larger principal curvature of the level set.
    Ellipsoid { a: f64, b: f64, c: f64 },
}

/// Relative curvature gap below which a point counts as umbilic.
pub const UMBILIC_GAP: f64 = 1e-2;

impl Oracle {
    /// Principal direction at `p`, or `None` where it is undefined.
    pub fn direction(&self, p: &Point3<f64>) -> Option<Vector3<f64>> {
        match *self {
            Oracle::Torus => Vector3::new(-p.y, p.x, 0.0).try_normalize(1e-12),
            Oracle::Cylinder { axis } => Vector3::from(axis).try_normalize(1e-12),
            Oracle::Ellipsoid { a, b, c } => {
                let w = Vector3::new(2.0 / (a * a), 2.0 / (b * b), 2.0 / (c * c));
                let grad = p.coords.component_mul(&w);
                let h = Matrix3::from_diagonal(&w);
                implicit_principal(&grad, &h)
            }
        }
    }
}

/// Larger-curvature principal direction of a level set from the gradient
/// and Hessian of its defining function.
pub fn implicit_principal(grad: &Vector3<f64>, hess: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let g = grad.norm();
    let n = grad.try_normalize(1e-12)?;
    let proj = Matrix3::identity() - n * n.transpose();
    let shape = proj * hess * proj / g;
    let eig = SymmetricEigen::new(shape);
    // Drop the eigenvector closest to the normal.
    let normal_slot = (0..3)
        .max_by(|&i, &j| {
            let di = eig.eigenvectors.column(i).dot(&n).abs();
            let dj = eig.eigenvectors.column(j).dot(&n).abs();
            di.total_cmp(&dj)
        })
        .expect("three eigenpairs");
    let tangent: Vec<usize> = (0..3).filter(|&i| i != normal_slot).collect();
    let (k1, k2) = (eig.eigenvalues[tangent[0]], eig.eigenvalues[tangent[1]]);
    let scale = k1.abs().max(k2.abs());
    if scale == 0.0 || (k1 - k2).abs() < UMBILIC_GAP * scale {
        return None;
    }
    let pick = if k1.abs() >= k2.abs() { tangent[0] } else { tangent[1] };
    Some(eig.eigenvectors.column(pick).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    /// Radians.
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

impl AlignmentStats {
    pub fn median_deg(&self) -> f64 {
        self.median.to_degrees()
    }
}

/// Smallest unsigned angle between `dir` and any of the four branches
/// `{+-alpha, +-beta}`; `dir` is projected into the plane of the cross
/// first. `None` when the projection vanishes.
pub fn branch_angle(alpha: &Vector3<f64>, beta: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let n = alpha.cross(beta);
    let t = (dir - n * dir.dot(&n)).try_normalize(1e-9)?;
    let a = t.dot(beta).atan2(t.dot(alpha)).rem_euclid(FRAC_PI_2);
    Some(a.min(FRAC_PI_2 - a))
}

/// Angle statistics between a field and an oracle evaluated at face
/// centroids.
pub fn alignment_error(field: &CrossField, mesh: &TriMesh, oracle: &Oracle) -> Result<AlignmentStats> {
    if field.len() != mesh.face_count() {
        return Err(Error::DimensionMismatch {
            expected: mesh.face_count(),
            got: field.len(),
        });
    }
    let mut angles = Vec::with_capacity(field.len());
    let mut excluded = 0;
    for f in 0..field.len() {
        let angle = oracle
            .direction(&mesh.centroids()[f])
            .and_then(|d| branch_angle(&field.alpha[f], &field.beta[f], &d));
        match angle {
            Some(a) => angles.push(a),
            None => excluded += 1,
        }
    }
    if angles.is_empty() {
        return Err(Error::Config("oracle is undefined on every face".into()));
    }
    angles.sort_by(f64::total_cmp);
    let k = angles.len();
    let median = if k % 2 == 1 {
        angles[k / 2]
    } else {
        0.5 * (angles[k / 2 - 1] + angles[k / 2])
    };
    Ok(AlignmentStats {
        median,
        mean: angles.iter().sum::<f64>() / k as f64,
        max: angles[k - 1],
        evaluated: k,
        excluded,
    })
}

/// Cross field whose first direction follows the oracle wherever it is
/// defined (and `mu` elsewhere).
pub fn oracle_field(mesh: &TriMesh, oracle: &Oracle) -> Result<CrossField> {
    let theta = (0..mesh.face_count())
        .map(|f| {
            oracle
                .direction(&mesh.centroids()[f])
                .map_or(0.0, |d| mesh.frames()[f].angle_of(&d))
        })
        .collect();
    CrossField::from_theta(theta, mesh.frames())
}

/// How well an SDF fits a mesh, measured on the face centroids and one
/// seeded round of near-surface samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdfFitStats {
    /// Mean `|f|` over the centroids.
    pub mean_abs_value: f64,
    /// Mean `|1 - |grad f||` over centroids and near-surface samples.
    pub mean_eikonal: f64,
    /// Mean `|H n|` over the centroids.
    pub mean_hessian_normal: f64,
}

pub fn sdf_fit_stats(sdf: &SdfModel, mesh: &TriMesh, k: usize, seed: u64) -> Result<SdfFitStats> {
    let p = build_p(mesh);
    let omega = build_omega(&p.points, k, seed);
    let on = sdf.net.query_batch(&p.points, JetOrder::Hessian)?;
    let mut all = sdf.net.query_batch(&omega, JetOrder::Gradient)?;
    all.extend_from_slice(&on);
    Ok(SdfFitStats {
        mean_abs_value: loss_dirichlet(&on),
        mean_eikonal: loss_eikonal(&all),
        mean_hessian_normal: loss_align_normal(&on, &p.normals),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(mesh: &TriMesh, seed: u64) -> CrossField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..mesh.face_count()).map(|_| rng.gen_range(0.0..TAU)).collect();
        CrossField::from_theta(theta, mesh.frames()).unwrap()
    }

    #[test]
    fn reduction_range() {
        assert_eq!(reduce_quarter(0.0), 0.0);
        assert!((reduce_quarter(FRAC_PI_4) - FRAC_PI_4).abs() < 1e-15);
        assert!((reduce_quarter(-FRAC_PI_4) - FRAC_PI_4).abs() < 1e-15);
        assert!((reduce_quarter(3.0 * FRAC_PI_2 + 0.1) - 0.1).abs() < 1e-12);
        for i in -100..100 {
            let r = reduce_quarter(i as f64 * 0.137);
            assert!(r > -FRAC_PI_4 - 1e-15 && r <= FRAC_PI_4 + 1e-15);
        }
    }

    #[test]
    fn random_fields_obey_poincare_hopf() {
        for (mesh, chi) in [
            (shapes::icosphere(2, 0.4), 2),
            (shapes::uv_torus(0.35, 0.15, 24, 12), 0),
            (shapes::genus2_slab(2), -2),
        ] {
            let r = singularities(&random_field(&mesh, 3), &mesh).unwrap();
            assert_eq!(r.euler_characteristic, chi);
            assert_eq!(r.total_index, chi as f64);
            assert!(r.boundary_vertices.is_empty());
        }
    }

    #[test]
    fn constant_flat_field_is_regular() {
        let m = shapes::flat_grid(5, 4, 0.1);
        let f = CrossField::from_theta(
            (0..m.face_count()).map(|i| m.frames()[i].angle_of(&Vector3::x())).collect(),
            m.frames(),
        )
        .unwrap();
        let r = singularities(&f, &m).unwrap();
        assert_eq!(r.singularity_count, 0);
        assert!(!r.boundary_vertices.is_empty());
        // 4 x 3 interior vertices.
        assert_eq!(r.quarters.iter().flatten().count(), 12);
    }

    #[test]
    fn quarter_winding_gives_quarter_index() {
        // theta = phi / 4 about the center vertex jumps by a quarter turn
        // across its branch cut, which the cross cannot see.
        let m = shapes::flat_grid(4, 4, 0.25);
        let center = Point3::new(0.5, 0.5, 0.0);
        let theta = (0..m.face_count())
            .map(|f| {
                let d = m.centroids()[f] - center;
                let psi = d.y.atan2(d.x) / 4.0;
                m.frames()[f].angle_of(&Vector3::new(psi.cos(), psi.sin(), 0.0))
            })
            .collect();
        let field = CrossField::from_theta(theta, m.frames()).unwrap();
        let r = singularities(&field, &m).unwrap();
        let v = m.vertices().iter().position(|p| (p - center).norm() < 1e-12).unwrap();
        assert_eq!(r.index(v), Some(0.25));
        assert_eq!(r.singularity_count, 1);
        // Reversed winding.
        let neg = CrossField::from_theta(
            (0..m.face_count())
                .map(|f| {
                    let d = m.centroids()[f] - center;
                    let psi = -d.y.atan2(d.x) / 4.0;
                    m.frames()[f].angle_of(&Vector3::new(psi.cos(), psi.sin(), 0.0))
                })
                .collect(),
            m.frames(),
        )
        .unwrap();
        assert_eq!(singularities(&neg, &m).unwrap().index(v), Some(-0.25));
    }

    #[test]
    fn global_quarter_turn_keeps_indices() {
        let m = shapes::icosphere(1, 0.4);
        let f = random_field(&m, 8);
        let g = CrossField::from_theta(f.theta.iter().map(|t| t + FRAC_PI_2).collect(), m.frames()).unwrap();
        assert_eq!(singularities(&f, &m).unwrap().quarters, singularities(&g, &m).unwrap().quarters);
    }

    #[test]
    fn export_round_trip() {
        let m = shapes::icosphere(0, 0.4);
        let f = random_field(&m, 1);
        let text = field_to_string(&f);
        assert_eq!(text.lines().count(), 21);
        let back = parse_field(&text).unwrap();
        for (i, (a, b)) in back.iter().enumerate() {
            assert!((a - f.alpha[i]).amax() < 1e-6);
            assert!((b - f.beta[i]).amax() < 1e-6);
            assert!((a.norm() - 1.0).abs() < 1e-6);
        }
        assert!(parse_field("ROSY 4 2\n1 0 0 0 1 0\n").is_err());
        assert!(parse_field("ROSY 3 0\n").is_err());
    }

    #[test]
    fn oracle_self_comparison_and_rotation() {
        let m = shapes::uv_torus(0.35, 0.15, 32, 16);
        let f = oracle_field(&m, &Oracle::Torus).unwrap();
        let s = alignment_error(&f, &m, &Oracle::Torus).unwrap();
        assert!(s.median < 1e-6 && s.excluded == 0);
        let g = CrossField::from_theta(f.theta.iter().map(|t| t + FRAC_PI_4).collect(), m.frames()).unwrap();
        let s = alignment_error(&g, &m, &Oracle::Torus).unwrap();
        assert!((s.median - FRAC_PI_4).abs() < 1e-9);
    }

    #[test]
    fn sphere_is_all_umbilic() {
        let m = shapes::icosphere(1, 0.4);
        let f = random_field(&m, 0);
        let o = Oracle::Ellipsoid { a: 0.4, b: 0.4, c: 0.4 };
        assert!(alignment_error(&f, &m, &o).is_err());
        let e = Oracle::Ellipsoid { a: 0.5, b: 0.35, c: 0.2 };
        let m = shapes::ellipsoid(2, 0.5, 0.35, 0.2);
        let s = alignment_error(&oracle_field(&m, &e).unwrap(), &m, &e).unwrap();
        assert!(s.median < 1e-6);
    }

    #[test]
    fn ellipsoid_direction_at_axis_tip() {
        // At (a, 0, 0) the curvatures are a/b^2 and a/c^2; c is smallest,
        // so the larger curvature bends toward z.
        let d = Oracle::Ellipsoid { a: 0.5, b: 0.35, c: 0.2 }
            .direction(&Point3::new(0.5, 0.0, 0.0))
            .unwrap();
        assert!((d.z.abs() - 1.0).abs() < 1e-12);
    }
}
