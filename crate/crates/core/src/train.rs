//! Optimization loop for the SDF and angle models.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::angle::{face_features, AngleMode, AngleModel, CrossField};
use crate::checkpoint::Checkpoint;
use crate::diff::{DerivativeBundle, JetOrder};
use crate::error::{Error, Result};
use crate::feature_lines::FeatureWeights;
use crate::losses::{
    dirichlet_point, eikonal_point, far_point, normal_point, principal_point, smoothness, tau, LossTerms,
    LossWeights,
};
use crate::mesh::TriMesh;
use crate::sampling::{box_points, build_p, neighbor_scales, offset_points, round_rng, SurfaceSamples, DEFAULT_K};
use crate::sdf::{init_sdf, SdfModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Fit the SDF alone first, then freeze it and fit the field alone.
    pub two_step: bool,
    pub angle_mode: AngleMode,
    pub k_neighbors: usize,
    /// Global gradient-norm cap; off when `None`.
    pub grad_clip: Option<f64>,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            log_every: 1,
            checkpoint_every: 1000,
            two_step: false,
            angle_mode: AngleMode::Network,
            k_neighbors: DEFAULT_K,
            grad_clip: None,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        self.weights.validate()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

/// Which parameters an iteration updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Joint,
    /// First half of the two-step ablation.
    Sdf,
    /// Second half of the two-step ablation.
    Field,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Joint => "joint",
            Stage::Sdf => "sdf",
            Stage::Field => "field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub stage: Stage,
    pub terms: LossTerms,
    pub tau: f64,
    pub total: f64,
}

pub const HISTORY_HEADER: &str = "iter,stage,L_E,L_DM,L_DNM,L_AN,L_AP,L_S,tau,total";

impl HistoryRow {
    pub fn csv(&self) -> String {
        let t = &self.terms;
        // `{:e}` prints the shortest representation that round-trips.
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iter,
            self.stage.as_str(),
            t.e,
            t.dm,
            t.dnm,
            t.an,
            t.ap,
            t.s,
            self.tau,
            self.total
        )
    }
}

pub struct TrainResult {
    pub sdf: SdfModel,
    pub angle: AngleModel,
    pub history: Vec<HistoryRow>,
    pub constrained: Vec<Option<f64>>,
}

impl TrainResult {
    pub fn cross_field(&self, mesh: &TriMesh) -> Result<CrossField> {
        extract_field(&self.angle, &self.constrained, mesh)
    }
}

/// Cross field with feature-line constraints applied.
pub fn extract_field(angle: &AngleModel, constrained: &[Option<f64>], mesh: &TriMesh) -> Result<CrossField> {
    let mut theta = angle.predict_theta(&face_features(mesh).view())?;
    apply_constraints(&mut theta, constrained);
    CrossField::from_theta(theta, mesh.frames())
}

fn apply_constraints(theta: &mut [f64], constrained: &[Option<f64>]) {
    for (t, c) in theta.iter_mut().zip(constrained) {
        if let Some(c) = c {
            *t = *c;
        }
    }
}

struct Outputs {
    dir: PathBuf,
    history: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            let mut w = BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?);
            writeln!(w, "{header}").map_err(|e| Error::io(&p, e))?;
            Ok(w)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            history: open("history.csv", HISTORY_HEADER)?,
            timing: open("timing.csv", "iter,ms")?,
        })
    }

    fn row(&mut self, row: &HistoryRow, ms: f64) -> Result<()> {
        let d = &self.dir;
        writeln!(self.history, "{}", row.csv()).map_err(|e| Error::io(d, e))?;
        writeln!(self.timing, "{},{:.3}", row.iter, ms).map_err(|e| Error::io(d, e))
    }

    fn flush(&mut self) -> Result<()> {
        let d = &self.dir;
        self.history.flush().map_err(|e| Error::io(d, e))?;
        self.timing.flush().map_err(|e| Error::io(d, e))
    }

    fn checkpoint(&mut self, ck: &Checkpoint, name: &str) -> Result<()> {
        self.flush()?;
        ck.save(self.dir.join("checkpoints").join(name))
    }
}

/// Gradients and term values of one iteration.
struct Step {
    terms: LossTerms,
    sdf_grad: Vec<f64>,
    angle_grad: Vec<f64>,
}

struct Context<'a> {
    mesh: &'a TriMesh,
    config: &'a TrainConfig,
    p: SurfaceSamples,
    sigma: Vec<f64>,
    features: Array2<f64>,
    feature_weight: Vec<f64>,
    constrained: Vec<Option<f64>>,
}

impl<'a> Context<'a> {
    fn new(mesh: &'a TriMesh, config: &'a TrainConfig, fw: &FeatureWeights) -> Self {
        let p = build_p(mesh);
        let sigma = neighbor_scales(&p.points, config.k_neighbors);
        Self {
            mesh,
            config,
            p,
            sigma,
            features: face_features(mesh),
            feature_weight: fw.weight.clone(),
            constrained: fw.constrained.clone(),
        }
    }

    /// Terms and gradients at the current parameters for iteration `iter`.
    /// `frozen_p` carries cached surface bundles when the SDF is frozen.
    fn evaluate(
        &self,
        sdf: &SdfModel,
        angle: &AngleModel,
        iter: usize,
        tau: f64,
        stage: Stage,
        frozen_p: Option<&[DerivativeBundle]>,
    ) -> Result<Step> {
        let w = &self.config.weights;
        let n = self.p.len();
        let np = n as f64;
        let omega = offset_points(
            &self.p.points,
            &self.sigma,
            &mut round_rng(self.config.seed, iter as u64, 0),
        );
        let q = box_points(n, &mut round_rng(self.config.seed, iter as u64, 1));
        let ne = (n + omega.len()) as f64;
        let train_sdf = stage != Stage::Field;
        let use_field = stage != Stage::Sdf;

        let (theta, tape) = if use_field {
            let (mut t, tape) = angle.forward_train(&self.features.view())?;
            apply_constraints(&mut t, &self.constrained);
            (t, Some(tape))
        } else {
            (vec![0.0; n], None)
        };
        let field = CrossField::from_theta(theta, &self.p.frames)?;

        let mut terms = LossTerms::default();
        let mut theta_bar = vec![0.0; n];
        let mut sdf_grad = vec![0.0; sdf.net.param_count()];
        let lam_ap = if use_field { w.lambda_ap } else { 0.0 };

        let mut surface = |start: usize, bundles: &[DerivativeBundle], want_adj: bool| {
            let mut adj = Vec::with_capacity(if want_adj { bundles.len() } else { 0 });
            for (j, b) in bundles.iter().enumerate() {
                let i = start + j;
                let (e, ea) = eikonal_point(b);
                let (dm, da) = dirichlet_point(b);
                let (an, na) = normal_point(b, &self.p.normals[i]);
                terms.e += e;
                terms.dm += dm;
                terms.an += an;
                if use_field {
                    let pt = principal_point(b, &field.alpha[i], &field.beta[i], self.feature_weight[i]);
                    terms.ap += pt.value;
                    theta_bar[i] += lam_ap / np * pt.theta;
                    if want_adj {
                        let mut a = pt.bundle.scaled(lam_ap / np);
                        a += ea.scaled(w.lambda_e / ne);
                        a += da.scaled(w.lambda_dm / np);
                        a += na.scaled(tau * w.lambda_an / np);
                        adj.push(a);
                    }
                } else if want_adj {
                    let mut a = ea.scaled(w.lambda_e / ne);
                    a += da.scaled(w.lambda_dm / np);
                    a += na.scaled(tau * w.lambda_an / np);
                    adj.push(a);
                }
            }
            adj
        };

        match frozen_p {
            Some(cached) => {
                surface(0, cached, false);
            }
            None => {
                sdf.net
                    .accumulate_gradient(&self.p.points, JetOrder::Hessian, &mut sdf_grad, |s, b| surface(s, b, true))?;
            }
        }

        // Near-surface and box samples only influence the SDF; when it is
        // frozen their terms are still reported.
        let mut e_omega = 0.0;
        let mut dnm = 0.0;
        if train_sdf {
            sdf.net.accumulate_gradient(&omega, JetOrder::Gradient, &mut sdf_grad, |_, bundles| {
                bundles
                    .iter()
                    .map(|b| {
                        let (e, ea) = eikonal_point(b);
                        e_omega += e;
                        ea.scaled(w.lambda_e / ne)
                    })
                    .collect()
            })?;
            sdf.net.accumulate_gradient(&q, JetOrder::Value, &mut sdf_grad, |_, bundles| {
                bundles
                    .iter()
                    .map(|b| {
                        let (v, a) = far_point(b, w.rho_dnm);
                        dnm += v;
                        a.scaled(w.lambda_dnm / np)
                    })
                    .collect()
            })?;
        } else {
            for b in sdf.net.query_batch(&omega, JetOrder::Gradient)? {
                e_omega += eikonal_point(&b).0;
            }
            for b in sdf.net.query_batch(&q, JetOrder::Value)? {
                dnm += far_point(&b, w.rho_dnm).0;
            }
        }
        terms.e = (terms.e + e_omega) / ne;
        terms.dm /= np;
        terms.an /= np;
        terms.ap /= np;
        terms.dnm = dnm / np;

        let mut angle_grad = vec![0.0; angle.param_count()];
        if use_field {
            let (s, sg) = smoothness(&field, self.mesh);
            terms.s = s;
            for (tb, g) in theta_bar.iter_mut().zip(&sg) {
                *tb += w.lambda_s * g;
            }
            for (tb, c) in theta_bar.iter_mut().zip(&self.constrained) {
                if c.is_some() {
                    *tb = 0.0;
                }
            }
            terms.check_finite(Some(iter))?;
            angle.backward(&self.features.view(), tape.unwrap(), &theta_bar, &mut angle_grad)?;
        } else {
            // The field is not trained in this stage; report its current
            // smoothness for reference.
            let mut theta = angle.predict_theta(&self.features.view())?;
            apply_constraints(&mut theta, &self.constrained);
            let f = CrossField::from_theta(theta, &self.p.frames)?;
            terms.s = smoothness(&f, self.mesh).0;
            terms.check_finite(Some(iter))?;
        }
        Ok(Step {
            terms,
            sdf_grad,
            angle_grad,
        })
    }
}

fn clip(grads: &mut [&mut Vec<f64>], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Trains both models on a normalized mesh. With `out`, history, timing and
/// checkpoints are written under that directory as training proceeds; on
/// divergence the last written checkpoint is left in place.
pub fn train(mesh: &TriMesh, config: &TrainConfig, features: Option<&FeatureWeights>, out: Option<&Path>) -> Result<TrainResult> {
    config.validate()?;
    let n = mesh.face_count();
    let fw = features.cloned().unwrap_or_else(|| FeatureWeights::none(n));
    if fw.weight.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: fw.weight.len(),
        });
    }
    let ctx = Context::new(mesh, config, &fw);
    let mut sdf = init_sdf(config.seed.wrapping_mul(2));
    let mut angle = AngleModel::init(config.angle_mode, n, config.seed.wrapping_mul(2).wrapping_add(1));
    let adam = |len| Adam::new(len, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut sdf_opt = adam(sdf.net.param_count());
    let mut angle_opt = adam(angle.param_count());
    let mut outputs = out.map(Outputs::create).transpose()?;
    let mut history = Vec::new();

    let stages: Vec<Stage> = if config.two_step {
        vec![Stage::Sdf, Stage::Field]
    } else {
        vec![Stage::Joint]
    };
    let constrained_record = if fw.constrained_count() > 0 { fw.constrained.clone() } else { Vec::new() };
    let snapshot = |sdf: &SdfModel, angle: &AngleModel, iteration: usize, stage: Stage| Checkpoint {
        iteration,
        stage: stage.as_str().to_string(),
        sdf: sdf.clone(),
        angle: angle.clone(),
        constrained: constrained_record.clone(),
    };

    let mut global = 0usize;
    for &stage in &stages {
        let frozen: Option<Vec<DerivativeBundle>> = if stage == Stage::Field {
            Some(sdf.net.query_batch(&ctx.p.points, JetOrder::Hessian)?)
        } else {
            None
        };
        for i in 0..config.iterations {
            let start = Instant::now();
            let t = if stage == Stage::Field { 0.0 } else { tau(i, config.iterations) };
            let step = match ctx.evaluate(&sdf, &angle, global, t, stage, frozen.as_deref()) {
                Ok(s) => s,
                Err(e) => {
                    if let Some(o) = outputs.as_mut() {
                        o.flush()?;
                    }
                    return Err(e);
                }
            };
            let w = &config.weights;
            let mut total = w.lambda_e * step.terms.e
                + w.lambda_dm * step.terms.dm
                + w.lambda_dnm * step.terms.dnm
                + t * w.lambda_an * step.terms.an;
            if stage != Stage::Sdf {
                total += w.lambda_ap * step.terms.ap + w.lambda_s * step.terms.s;
            }
            let Step {
                terms,
                mut sdf_grad,
                mut angle_grad,
            } = step;
            if let Some(c) = config.grad_clip {
                clip(&mut [&mut sdf_grad, &mut angle_grad], c);
            }
            if stage != Stage::Field {
                sdf_opt.step(sdf.net.params_mut(), &sdf_grad);
            }
            if stage != Stage::Sdf {
                angle_opt.step(angle.params_mut(), &angle_grad);
            }
            global += 1;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let row = HistoryRow {
                iter: global - 1,
                stage,
                terms,
                tau: t,
                total,
            };
            if i % config.log_every == 0 || i + 1 == config.iterations {
                if let Some(o) = outputs.as_mut() {
                    o.row(&row, ms)?;
                }
                history.push(row.clone());
            }
            if (global - 1).is_multiple_of(100) {
                log::info!(
                    "iter {} [{}] total {:.6e} (E {:.3e} DM {:.3e} DNM {:.3e} AN {:.3e} AP {:.3e} S {:.3e}) {:.0} ms",
                    row.iter,
                    stage.as_str(),
                    total,
                    terms.e,
                    terms.dm,
                    terms.dnm,
                    terms.an,
                    terms.ap,
                    terms.s,
                    ms
                );
            }
            if config.checkpoint_every > 0 && global.is_multiple_of(config.checkpoint_every) {
                if let Some(o) = outputs.as_mut() {
                    o.checkpoint(&snapshot(&sdf, &angle, global, stage), &format!("iter_{global:06}.ckpt"))?;
                }
            }
        }
    }
    if let Some(o) = outputs.as_mut() {
        let last = *stages.last().unwrap();
        o.checkpoint(&snapshot(&sdf, &angle, global, last), "final.ckpt")?;
    }
    Ok(TrainResult {
        sdf,
        angle,
        history,
        constrained: constrained_record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn first_adam_step_closed_form() {
        let mut opt = Adam::new(3, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, 2.0, 3.0];
        let g = [0.5, -2.0, 1e-3];
        opt.step(&mut p, &g);
        for i in 0..3 {
            let want = [1.0, 2.0, 3.0][i] - 0.1 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_from_rest_keeps_params() {
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, vec![1.0, -1.0]);
        // Moments decay after a non-zero step.
        opt.step(&mut p, &[1.0, 1.0]);
        let m = opt.m[0];
        opt.step(&mut p, &[0.0, 0.0]);
        assert!((opt.m[0] - 0.9 * m).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let mut opt = Adam::new(1, 0.01, 0.9, 0.999, 1e-8);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p[0];
            opt.step(&mut p, &[3.0]);
            last = before - p[0];
        }
        assert!((last - 0.01).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let c = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_iteration_changes_parameters() {
        let m = shapes::icosphere(1, 0.4);
        let cfg = TrainConfig {
            iterations: 1,
            angle_mode: AngleMode::Direct,
            ..Default::default()
        };
        let r = train(&m, &cfg, None, None).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_ne!(r.sdf.net.params(), init_sdf(0).net.params());
        assert_ne!(r.angle.params(), AngleModel::init_direct(m.face_count(), 1).params());
    }

    #[test]
    fn scaling_all_weights_scales_total_and_keeps_direction() {
        let m = shapes::icosphere(1, 0.4);
        let base = TrainConfig::default();
        let c = 3.7;
        let scaled = TrainConfig {
            weights: base.weights.scaled(c),
            ..base.clone()
        };
        let fw = FeatureWeights::none(m.face_count());
        let sdf = init_sdf(0);
        let angle = AngleModel::init_network(1);
        let t = tau(2500, 10_000);
        let a = Context::new(&m, &base, &fw).evaluate(&sdf, &angle, 0, t, Stage::Joint, None).unwrap();
        let b = Context::new(&m, &scaled, &fw).evaluate(&sdf, &angle, 0, t, Stage::Joint, None).unwrap();
        assert_eq!(a.terms, b.terms);
        let ta = crate::losses::total_loss(&a.terms, &base.weights, t).unwrap();
        let tb = crate::losses::total_loss(&b.terms, &scaled.weights, t).unwrap();
        assert!((tb - c * ta).abs() < 1e-12 * tb);
        let ga: Vec<f64> = a.sdf_grad.iter().chain(&a.angle_grad).copied().collect();
        let gb: Vec<f64> = b.sdf_grad.iter().chain(&b.angle_grad).copied().collect();
        let dot: f64 = ga.iter().zip(&gb).map(|(x, y)| x * y).sum();
        let na = ga.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = gb.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dot / (na * nb) - 1.0).abs() < 1e-9);
        assert!((nb / na - c).abs() < 1e-9 * c);
    }
}
