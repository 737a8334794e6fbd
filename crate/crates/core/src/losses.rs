//! Loss terms and their sensitivities.
//!
//! Pointwise terms take a [`DerivativeBundle`] and return the term value
//! with its partial derivatives; the trainer averages and weights them.
//! Vector magnitudes are Euclidean norms. Where a norm or absolute value
//! is zero the zero subgradient is used.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::CrossField;
use crate::diff::{BundleAdjoint, DerivativeBundle};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_dm: f64,
    pub lambda_dnm: f64,
    pub lambda_an: f64,
    pub lambda_ap: f64,
    pub lambda_s: f64,
    pub rho_dnm: f64,
    pub rho_feature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_e: 50.0,
            lambda_dm: 7000.0,
            lambda_dnm: 600.0,
            lambda_an: 3.0,
            lambda_ap: 10.0,
            lambda_s: 30.0,
            rho_dnm: 100.0,
            rho_feature: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_e", self.lambda_e),
            ("lambda_dm", self.lambda_dm),
            ("lambda_dnm", self.lambda_dnm),
            ("lambda_an", self.lambda_an),
            ("lambda_ap", self.lambda_ap),
            ("lambda_s", self.lambda_s),
            ("rho_dnm", self.rho_dnm),
            ("rho_feature", self.rho_feature),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_e: self.lambda_e * c,
            lambda_dm: self.lambda_dm * c,
            lambda_dnm: self.lambda_dnm * c,
            lambda_an: self.lambda_an * c,
            lambda_ap: self.lambda_ap * c,
            lambda_s: self.lambda_s * c,
            ..*self
        }
    }
}

/// Annealing factor for the normal-alignment term: 1 for the first 20% of
/// training, linear down to 3e-4 at 40%, then 0.
pub fn tau(iter: usize, iterations: usize) -> f64 {
    let f = iter as f64 / iterations.max(1) as f64;
    if f < 0.2 {
        1.0
    } else if f < 0.4 {
        1.0 + (3e-4 - 1.0) * (f - 0.2) / 0.2
    } else {
        0.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|1 - |grad f||`.
pub fn eikonal_point(b: &DerivativeBundle) -> (f64, BundleAdjoint) {
    let g = b.gradient.norm();
    let r = 1.0 - g;
    let mut adj = BundleAdjoint::default();
    if g > 0.0 {
        adj.gradient = b.gradient * (-sign(r) / g);
    }
    (r.abs(), adj)
}

/// `|f|`.
pub fn dirichlet_point(b: &DerivativeBundle) -> (f64, BundleAdjoint) {
    let adj = BundleAdjoint {
        value: sign(b.value),
        ..Default::default()
    };
    (b.value.abs(), adj)
}

/// `exp(-rho |f|)`.
pub fn far_point(b: &DerivativeBundle, rho: f64) -> (f64, BundleAdjoint) {
    let e = (-rho * b.value.abs()).exp();
    let adj = BundleAdjoint {
        value: -rho * sign(b.value) * e,
        ..Default::default()
    };
    (e, adj)
}

/// `|H n|`.
pub fn normal_point(b: &DerivativeBundle, n: &Vector3<f64>) -> (f64, BundleAdjoint) {
    let u = b.hessian * n;
    let norm = u.norm();
    let mut adj = BundleAdjoint::default();
    if norm > 0.0 {
        adj.hessian = (u / norm) * n.transpose();
    }
    (norm, adj)
}

/// `|(H a) x a|` with sensitivities to `H` and to `a`.
fn principal_one(h: &Matrix3<f64>, a: &Vector3<f64>) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let u = h * a;
    let w = u.cross(a);
    let norm = w.norm();
    if norm == 0.0 {
        return (0.0, Matrix3::zeros(), Vector3::zeros());
    }
    let wh = w / norm;
    let ubar = a.cross(&wh);
    let hbar = ubar * a.transpose();
    let abar = h.transpose() * ubar + wh.cross(&u);
    (norm, hbar, abar)
}

/// Principal-direction alignment at one sample.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalTerm {
    pub value: f64,
    pub bundle: BundleAdjoint,
    /// Sensitivity to the face angle.
    pub theta: f64,
}

/// `D (|H a x a| + |H b x b|)`.
pub fn principal_point(b: &DerivativeBundle, alpha: &Vector3<f64>, beta: &Vector3<f64>, d: f64) -> PrincipalTerm {
    let (va, ha, aa) = principal_one(&b.hessian, alpha);
    let (vb, hb, bb) = principal_one(&b.hessian, beta);
    // d alpha / d theta = beta, d beta / d theta = -alpha.
    let theta = d * (aa.dot(beta) - bb.dot(alpha));
    PrincipalTerm {
        value: d * (va + vb),
        bundle: BundleAdjoint {
            hessian: (ha + hb) * d,
            ..Default::default()
        },
        theta,
    }
}

fn mean_of<F: Fn(&DerivativeBundle) -> f64>(bundles: &[DerivativeBundle], f: F) -> f64 {
    if bundles.is_empty() {
        return 0.0;
    }
    bundles.iter().map(f).sum::<f64>() / bundles.len() as f64
}

pub fn loss_eikonal(bundles: &[DerivativeBundle]) -> f64 {
    mean_of(bundles, |b| eikonal_point(b).0)
}

pub fn loss_dirichlet(bundles: &[DerivativeBundle]) -> f64 {
    mean_of(bundles, |b| b.value.abs())
}

pub fn loss_dirichlet_far(bundles: &[DerivativeBundle], rho: f64) -> f64 {
    mean_of(bundles, |b| far_point(b, rho).0)
}

pub fn loss_align_normal(bundles: &[DerivativeBundle], normals: &[Vector3<f64>]) -> f64 {
    if bundles.is_empty() {
        return 0.0;
    }
    bundles
        .iter()
        .zip(normals)
        .map(|(b, n)| normal_point(b, n).0)
        .sum::<f64>()
        / bundles.len() as f64
}

pub fn loss_align_principal(bundles: &[DerivativeBundle], field: &CrossField, weights: &[f64]) -> f64 {
    if bundles.is_empty() {
        return 0.0;
    }
    (0..bundles.len())
        .map(|i| principal_point(&bundles[i], &field.alpha[i], &field.beta[i], weights[i]).value)
        .sum::<f64>()
        / bundles.len() as f64
}

/// Contribution of one neighbor pair: the four absolute dot products minus
/// 2, with sensitivities to both angles. `r` carries `q`'s tangent plane
/// into `p`'s.
pub fn smoothness_pair(
    ap: &Vector3<f64>,
    bp: &Vector3<f64>,
    aq: &Vector3<f64>,
    bq: &Vector3<f64>,
    r: &Matrix3<f64>,
) -> (f64, f64, f64) {
    let raq = r * aq;
    let rbq = r * bq;
    let x = [ap.dot(&raq), ap.dot(&rbq), bp.dot(&raq), bp.dot(&rbq)];
    let s = x.map(sign);
    let value = x.iter().map(|v| v.abs()).sum::<f64>() - 2.0;
    let dp = s[0] * x[2] + s[1] * x[3] - s[2] * x[0] - s[3] * x[1];
    let dq = s[0] * x[1] - s[1] * x[0] + s[2] * x[3] - s[3] * x[2];
    (value, dp, dq)
}

/// Smoothness of a cross field and its sensitivity to every face angle.
/// Each face averages over the neighbors it has; faces without neighbors
/// are skipped.
pub fn smoothness(field: &CrossField, mesh: &TriMesh) -> (f64, Vec<f64>) {
    let n = mesh.face_count();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    let mut counted = 0usize;
    for p in 0..n {
        let links: Vec<_> = mesh.links(p).iter().flatten().collect();
        if links.is_empty() {
            continue;
        }
        counted += 1;
        let k = 1.0 / links.len() as f64;
        for l in links {
            let q = l.neighbor;
            let (v, dp, dq) = smoothness_pair(&field.alpha[p], &field.beta[p], &field.alpha[q], &field.beta[q], &l.rotation);
            total += k * v;
            grad[p] += k * dp;
            grad[q] += k * dq;
        }
    }
    if counted == 0 {
        return (0.0, grad);
    }
    let c = counted as f64;
    grad.iter_mut().for_each(|g| *g /= c);
    (total / c, grad)
}

pub fn loss_smoothness(field: &CrossField, mesh: &TriMesh) -> f64 {
    smoothness(field, mesh).0
}

/// Unweighted term values of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub e: f64,
    pub dm: f64,
    pub dnm: f64,
    pub an: f64,
    pub ap: f64,
    pub s: f64,
}

impl LossTerms {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("L_E", self.e),
            ("L_DM", self.dm),
            ("L_DNM", self.dnm),
            ("L_AN", self.an),
            ("L_AP", self.ap),
            ("L_S", self.s),
        ]
    }

    /// First non-finite term, if any.
    pub fn check_finite(&self, iter: Option<usize>) -> Result<()> {
        match self.named().iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::NonFinite {
                term: name.to_string(),
                iter,
            }),
            None => Ok(()),
        }
    }
}

/// Weighted sum of the terms.
pub fn total_loss(t: &LossTerms, w: &LossWeights, tau: f64) -> Result<f64> {
    t.check_finite(None)?;
    Ok(w.lambda_e * t.e
        + w.lambda_dm * t.dm
        + w.lambda_dnm * t.dnm
        + tau * w.lambda_an * t.an
        + w.lambda_ap * t.ap
        + w.lambda_s * t.s)
}
