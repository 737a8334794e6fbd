//! Surface, near-surface and box sample sets.

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mesh::{LocalFrame, TriMesh};

pub const DEFAULT_K: usize = 50;

/// One sample per face: centroid, unit normal and tangent frame.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub frames: Vec<LocalFrame>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn build_p(mesh: &TriMesh) -> SurfaceSamples {
    SurfaceSamples {
        points: mesh.centroids().to_vec(),
        normals: mesh.face_normals().to_vec(),
        frames: mesh.frames().to_vec(),
    }
}

/// Distance from every point to its `k`-th nearest other point. Falls back
/// to `k = n - 1` when there are not enough points.
pub fn neighbor_scales(points: &[Point3<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let k = if n <= k {
        log::warn!("only {n} samples; using k = {} for the offset scale", n - 1);
        n - 1
    } else {
        k
    };
    let mut tree = KdTree::with_capacity(3, 64);
    for (i, p) in points.iter().enumerate() {
        tree.add([p.x, p.y, p.z], i).expect("finite sample coordinates");
    }
    points
        .iter()
        .map(|p| {
            // The query point itself comes back at distance zero.
            let hits = tree
                .nearest(&[p.x, p.y, p.z], k + 1, &squared_euclidean)
                .expect("finite sample coordinates");
            hits.last().map_or(0.0, |(d2, _)| d2.sqrt())
        })
        .collect()
}

/// Generator for one sampling round. Rounds and streams are independent.
pub fn round_rng(seed: u64, round: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round.wrapping_mul(4).wrapping_add(stream));
    rng
}

/// One isotropic Gaussian draw around every point with per-point std.
pub fn offset_points(points: &[Point3<f64>], sigma: &[f64], rng: &mut impl Rng) -> Vec<Point3<f64>> {
    points
        .iter()
        .zip(sigma)
        .map(|(p, s)| {
            let d = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            p + d * *s
        })
        .collect()
}

pub fn build_omega(points: &[Point3<f64>], k: usize, seed: u64) -> Vec<Point3<f64>> {
    let sigma = neighbor_scales(points, k);
    offset_points(points, &sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `n` points uniform in `[-0.5, 0.5)^3`.
pub fn box_points(n: usize, rng: &mut impl Rng) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            )
        })
        .collect()
}

pub fn build_q(n: usize, seed: u64) -> Vec<Point3<f64>> {
    box_points(n, &mut ChaCha8Rng::seed_from_u64(seed))
}
