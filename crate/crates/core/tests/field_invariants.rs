use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix3, Point3, Vector3};
use neurcross::analysis::singularities;
use neurcross::angle::CrossField;
use neurcross::diff::DerivativeBundle;
use neurcross::losses::{
    loss_align_normal, loss_align_principal, loss_dirichlet, loss_dirichlet_far, loss_eikonal, loss_smoothness,
};
use neurcross::mesh::TriMesh;
use neurcross::shapes;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bundles(n: usize, seed: u64) -> Vec<DerivativeBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = || rng.gen_range(-2.0..2.0);
    (0..n)
        .map(|_| {
            let a = Matrix3::from_fn(|_, _| u());
            DerivativeBundle {
                value: u(),
                gradient: Vector3::new(u(), u(), u()),
                hessian: a + a.transpose(),
            }
        })
        .collect()
}

fn field(theta: Vec<f64>, mesh: &TriMesh) -> CrossField {
    CrossField::from_theta(theta, mesh.frames()).unwrap()
}

/// Each face split into four through its edge midpoints.
fn refine(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices().to_vec();
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vs: &mut Vec<Point3<f64>>| {
        *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vs.push(Point3::from((vs[a].coords + vs[b].coords) / 2.0));
            vs.len() - 1
        })
    };
    let mut faces = Vec::new();
    for &[a, b, c] in mesh.faces() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    TriMesh::new(vertices, faces).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quarter_turns_leave_smoothness_unchanged(seed in any::<u64>(), turns in prop::collection::vec(-3i32..4, 80)) {
        let m = shapes::icosphere(1, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..m.face_count()).map(|_| rng.gen_range(0.0..TAU)).collect();
        let turned = theta.iter().zip(&turns).map(|(t, k)| t + *k as f64 * FRAC_PI_2).collect();
        let a = loss_smoothness(&field(theta, &m), &m);
        let b = loss_smoothness(&field(turned, &m), &m);
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn quarter_turns_leave_principal_alignment_unchanged(seed in any::<u64>(), turns in prop::collection::vec(-3i32..4, 80)) {
        let m = shapes::icosphere(1, 0.4);
        let bundles = random_bundles(m.face_count(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let theta: Vec<f64> = (0..m.face_count()).map(|_| rng.gen_range(0.0..TAU)).collect();
        let weights: Vec<f64> = (0..m.face_count()).map(|_| rng.gen_range(0.0..10.0)).collect();
        let turned = theta.iter().zip(&turns).map(|(t, k)| t + *k as f64 * FRAC_PI_2).collect();
        let a = loss_align_principal(&bundles, &field(theta, &m), &weights);
        let b = loss_align_principal(&bundles, &field(turned, &m), &weights);
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn terms_are_bounded_below(seed in any::<u64>()) {
        let m = shapes::icosphere(1, 0.4);
        let bundles = random_bundles(m.face_count(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let theta: Vec<f64> = (0..m.face_count()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let f = field(theta, &m);
        let ones = vec![1.0; m.face_count()];
        prop_assert!(loss_eikonal(&bundles) >= -1e-9);
        prop_assert!(loss_dirichlet(&bundles) >= -1e-9);
        prop_assert!(loss_dirichlet_far(&bundles, 100.0) >= -1e-9);
        prop_assert!(loss_align_normal(&bundles, m.face_normals()) >= -1e-9);
        prop_assert!(loss_align_principal(&bundles, &f, &ones) >= -1e-9);
        prop_assert!(loss_smoothness(&f, &m) >= -1e-9);
    }
}

#[test]
fn refinement_keeps_indices() {
    for (mesh, seed) in [
        (shapes::icosphere(1, 0.4), 1),
        (shapes::uv_torus(0.35, 0.15, 16, 8), 2),
        (shapes::genus2_slab(2), 3),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..mesh.face_count()).map(|_| rng.gen_range(0.0..TAU)).collect();
        let coarse = field(theta, &mesh);
        let fine_mesh = refine(&mesh);
        assert_eq!(fine_mesh.face_count(), 4 * mesh.face_count());
        // Children are coplanar with their parent, so the direction carries
        // over unchanged.
        let fine_theta = (0..fine_mesh.face_count())
            .map(|f| fine_mesh.frames()[f].angle_of(&coarse.alpha[f / 4]))
            .collect();
        let fine = field(fine_theta, &fine_mesh);
        let a = singularities(&coarse, &mesh).unwrap();
        let b = singularities(&fine, &fine_mesh).unwrap();
        assert_eq!(a.total_index, b.total_index);
        assert_eq!(a.total_index, a.euler_characteristic as f64);
        // Old vertices keep their index; new ones are regular.
        for v in 0..fine_mesh.vertices().len() {
            let expected = if v < mesh.vertices().len() { a.quarters[v] } else { Some(0) };
            assert_eq!(b.quarters[v], expected, "vertex {v}");
        }
    }
}
