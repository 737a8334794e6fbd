//! Per-face rotation angles and the cross field they induce.
//!
//! The network is pointwise: every face's 12-d feature row (centroid,
//! normal, local frame) goes through the same encoder/decoder stack of
//! residual bottleneck MLPs, with concatenation skips between mirrored
//! stages, and ends in a sigmoid so that `theta = 2 pi omega` with
//! `omega in [0, 1]`.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use ndarray::{concatenate, s, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::{dense_backward, dense_forward};
use crate::error::{Error, Result};
use crate::mesh::{LocalFrame, TriMesh};

pub const FEATURE_DIM: usize = 12;
/// Std of the initial final-layer weights (and of direct-mode angles).
pub const INIT_STD: f64 = 0.2;
const ENCODER: [usize; 3] = [3, 4, 6];
const DECODER: [usize; 4] = [3, 3, 4, 6];
const NARROW: usize = 256;
const WIDE: usize = 512;
const HEAD: usize = 32;
/// Rows per batched network pass.
const ROWS: usize = 1024;
/// Upper bound on activations kept between the forward and backward pass.
const TAPE_BUDGET_BYTES: usize = 768 << 20;

/// Per-face network input: centroid, normal, mu, nu.
pub fn face_features(mesh: &TriMesh) -> Array2<f64> {
    let n = mesh.face_count();
    let mut x = Array2::zeros((n, FEATURE_DIM));
    for f in 0..n {
        let c = mesh.centroids()[f];
        let fr = &mesh.frames()[f];
        let row = [
            c.x, c.y, c.z, fr.normal.x, fr.normal.y, fr.normal.z, fr.mu.x, fr.mu.y, fr.mu.z, fr.nu.x,
            fr.nu.y, fr.nu.z,
        ];
        for (k, v) in row.into_iter().enumerate() {
            x[[f, k]] = v;
        }
    }
    x
}

/// `alpha = mu cos(theta) + nu sin(theta)`, `beta = nu cos(theta) - mu sin(theta)`.
pub fn cross_from_theta(theta: f64, frame: &LocalFrame) -> (Vector3<f64>, Vector3<f64>) {
    let (s, c) = theta.sin_cos();
    (frame.mu * c + frame.nu * s, frame.nu * c - frame.mu * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossField {
    pub theta: Vec<f64>,
    pub alpha: Vec<Vector3<f64>>,
    pub beta: Vec<Vector3<f64>>,
}

impl CrossField {
    pub fn from_theta(theta: Vec<f64>, frames: &[LocalFrame]) -> Result<Self> {
        if theta.len() != frames.len() {
            return Err(Error::DimensionMismatch {
                expected: frames.len(),
                got: theta.len(),
            });
        }
        let (alpha, beta) = theta
            .iter()
            .zip(frames)
            .map(|(&t, fr)| cross_from_theta(t, fr))
            .unzip();
        Ok(Self { theta, alpha, beta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleMode {
    Network,
    Direct,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }

    fn w<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = self.fan_in * self.fan_out;
        ArrayView2::from_shape((self.fan_out, self.fan_in), &p[self.offset..self.offset + n]).unwrap()
    }

    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        let n = self.fan_in * self.fan_out;
        &p[self.offset + n..self.offset + self.len()]
    }

    fn forward(&self, p: &[f64], x: &ArrayView2<f64>) -> Array2<f64> {
        dense_forward(x, &self.w(p), self.b(p))
    }

    fn backward(
        &self,
        p: &[f64],
        grad: &mut [f64],
        x: &ArrayView2<f64>,
        ybar: &ArrayView2<f64>,
        need_input: bool,
    ) -> Option<Array2<f64>> {
        let n = self.fan_in * self.fan_out;
        let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(n);
        let mut gw = ArrayViewMut2::from_shape((self.fan_out, self.fan_in), gw).unwrap();
        dense_backward(x, &self.w(p), ybar, &mut gw, gb, need_input)
    }
}

/// `relu(x + L3(relu(L2(relu(L1 x)))))`.
#[derive(Debug, Clone, Copy)]
struct Bottleneck([Dense; 3]);

struct BottleneckTape {
    x: Array2<f64>,
    t1: Array2<f64>,
    t2: Array2<f64>,
    out: Array2<f64>,
}

fn relu(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|v| v.max(0.0));
    a
}

/// Zeroes adjoint entries where the ReLU output was not positive.
fn relu_mask(mut bar: Array2<f64>, out: &ArrayView2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut bar).and(out).for_each(|b, &o| {
        if o <= 0.0 {
            *b = 0.0;
        }
    });
    bar
}

impl Bottleneck {
    fn forward(&self, p: &[f64], x: Array2<f64>) -> BottleneckTape {
        let t1 = relu(self.0[0].forward(p, &x.view()));
        let t2 = relu(self.0[1].forward(p, &t1.view()));
        let mut out = self.0[2].forward(p, &t2.view());
        out += &x;
        let out = relu(out);
        BottleneckTape { x, t1, t2, out }
    }

    fn backward(&self, p: &[f64], grad: &mut [f64], tape: &BottleneckTape, ybar: Array2<f64>) -> Array2<f64> {
        let g = relu_mask(ybar, &tape.out.view());
        let t2bar = self.0[2].backward(p, grad, &tape.t2.view(), &g.view(), true).unwrap();
        let t2bar = relu_mask(t2bar, &tape.t2.view());
        let t1bar = self.0[1].backward(p, grad, &tape.t1.view(), &t2bar.view(), true).unwrap();
        let t1bar = relu_mask(t1bar, &tape.t1.view());
        let mut xbar = self.0[0].backward(p, grad, &tape.x.view(), &t1bar.view(), true).unwrap();
        xbar += &g;
        xbar
    }
}

/// Activations of one forward pass over a chunk of rows.
struct NetTape {
    input: Array2<f64>,
    h0: Array2<f64>,
    blocks: Vec<Vec<BottleneckTape>>,
    r: Array2<f64>,
    sig: Vec<f64>,
}

impl NetTape {
    fn block_out(&self, b: usize) -> &Array2<f64> {
        &self.blocks[b].last().expect("non-empty block").out
    }
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Dense,
    blocks: Vec<Vec<Bottleneck>>,
    /// Decoder entry layers, one per decoder block.
    bridge: Vec<Dense>,
    head1: Dense,
    head2: Dense,
    total: usize,
}

impl Layout {
    fn build() -> Self {
        let mut offset = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let d = Dense {
                fan_in,
                fan_out,
                offset,
            };
            offset += d.len();
            d
        };
        let stem = dense(FEATURE_DIM, NARROW);
        let mut blocks = Vec::new();
        for &n in &ENCODER {
            blocks.push(
                (0..n)
                    .map(|_| Bottleneck([dense(NARROW, 64), dense(64, 64), dense(64, NARROW)]))
                    .collect(),
            );
        }
        let mut bridge = Vec::new();
        for (k, &n) in DECODER.iter().enumerate() {
            bridge.push(dense(if k == 0 { NARROW } else { WIDE }, NARROW));
            blocks.push(
                (0..n)
                    .map(|_| Bottleneck([dense(WIDE, 128), dense(128, 128), dense(128, WIDE)]))
                    .collect(),
            );
        }
        let head1 = dense(WIDE, HEAD);
        let head2 = dense(HEAD, 1);
        Self {
            stem,
            blocks,
            bridge,
            head1,
            head2,
            total: offset,
        }
    }

    fn all_dense(&self) -> Vec<Dense> {
        let mut out = vec![self.stem];
        for b in &self.blocks {
            for bn in b {
                out.extend(bn.0);
            }
        }
        out.extend(&self.bridge);
        out.push(self.head1);
        out.push(self.head2);
        out
    }

    /// Doubles kept per row by a training forward pass.
    fn tape_width(&self) -> usize {
        let mut w = FEATURE_DIM + NARROW + HEAD + 1;
        for b in &self.blocks {
            for bn in b {
                w += bn.0[0].fan_in + bn.0[0].fan_out + bn.0[1].fan_out + bn.0[2].fan_out;
            }
        }
        w
    }

    fn forward(&self, p: &[f64], x: Array2<f64>) -> NetTape {
        let h0 = relu(self.stem.forward(p, &x.view()));
        let mut blocks: Vec<Vec<BottleneckTape>> = Vec::with_capacity(self.blocks.len());
        let run_block = |b: usize, mut a: Array2<f64>, blocks: &mut Vec<Vec<BottleneckTape>>| {
            let mut tapes = Vec::with_capacity(self.blocks[b].len());
            for bn in &self.blocks[b] {
                let t = bn.forward(p, a);
                a = t.out.clone();
                tapes.push(t);
            }
            blocks.push(tapes);
        };
        run_block(0, h0.clone(), &mut blocks);
        for b in 1..ENCODER.len() {
            let input = blocks[b - 1].last().unwrap().out.clone();
            run_block(b, input, &mut blocks);
        }
        for (k, fc) in self.bridge.iter().enumerate() {
            let prev = &blocks[ENCODER.len() - 1 + k].last().unwrap().out;
            let u = relu(fc.forward(p, &prev.view()));
            let skip = if k < ENCODER.len() {
                &blocks[ENCODER.len() - 1 - k].last().unwrap().out
            } else {
                &h0
            };
            let c = concatenate(Axis(1), &[u.view(), skip.view()]).unwrap();
            run_block(ENCODER.len() + k, c, &mut blocks);
        }
        let d = &blocks.last().unwrap().last().unwrap().out;
        let r = relu(self.head1.forward(p, &d.view()));
        let o = self.head2.forward(p, &r.view());
        let sig = o.iter().map(|&v| sigmoid(v)).collect();
        NetTape {
            input: x,
            h0,
            blocks,
            r,
            sig,
        }
    }

    fn backward(&self, p: &[f64], grad: &mut [f64], tape: &NetTape, theta_bar: &[f64]) {
        let n = theta_bar.len();
        let obar = Array2::from_shape_fn((n, 1), |(i, _)| theta_bar[i] * TAU * tape.sig[i] * (1.0 - tape.sig[i]));
        let rbar = self.head2.backward(p, grad, &tape.r.view(), &obar.view(), true).unwrap();
        let rbar = relu_mask(rbar, &tape.r.view());
        let last = self.blocks.len() - 1;
        let mut dbar = self
            .head1
            .backward(p, grad, &tape.block_out(last).view(), &rbar.view(), true)
            .unwrap();
        let ne = ENCODER.len();
        // Adjoints flowing into the skip sources, indexed like the encoder
        // outputs, plus one slot for the stem output.
        let mut skip_bar: Vec<Option<Array2<f64>>> = vec![None; ne + 1];
        for k in (0..self.bridge.len()).rev() {
            let b = ne + k;
            let cbar = self.block_backward(p, grad, tape, b, dbar);
            let ubar = cbar.slice(s![.., ..NARROW]).to_owned();
            let sbar = cbar.slice(s![.., NARROW..]).to_owned();
            let slot = if k < ne { ne - 1 - k } else { ne };
            skip_bar[slot] = Some(sbar);
            let u = tape.blocks[b][0].x.slice(s![.., ..NARROW]).to_owned();
            let ubar = relu_mask(ubar, &u.view());
            let prev = tape.block_out(b - 1);
            dbar = self.bridge[k]
                .backward(p, grad, &prev.view(), &ubar.view(), true)
                .unwrap();
        }
        // dbar is now the adjoint of the last encoder output via the bridge.
        for b in (0..ne).rev() {
            if let Some(sb) = skip_bar[b].take() {
                dbar += &sb;
            }
            dbar = self.block_backward(p, grad, tape, b, dbar);
        }
        if let Some(sb) = skip_bar[ne].take() {
            dbar += &sb;
        }
        let hbar = relu_mask(dbar, &tape.h0.view());
        self.stem.backward(p, grad, &tape.input.view(), &hbar.view(), false);
    }

    fn block_backward(&self, p: &[f64], grad: &mut [f64], tape: &NetTape, b: usize, mut ybar: Array2<f64>) -> Array2<f64> {
        for (bn, t) in self.blocks[b].iter().zip(&tape.blocks[b]).rev() {
            ybar = bn.backward(p, grad, t, ybar);
        }
        ybar
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-face angle predictor: either the residual network or free per-face
/// angles.
#[derive(Debug, Clone)]
pub struct AngleModel {
    mode: AngleMode,
    layout: Option<Layout>,
    params: Vec<f64>,
}

/// State kept between [`AngleModel::forward_train`] and
/// [`AngleModel::backward`].
pub struct AngleTape {
    chunks: Vec<Option<NetTape>>,
}

impl AngleModel {
    /// Network with default initialization: uniform `±1/sqrt(fan_in)` for
    /// every layer except the output layer, whose weights are drawn from
    /// `N(0, 0.2)` with zero bias.
    pub fn init_network(seed: u64) -> Self {
        let layout = Layout::build();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let dense = layout.all_dense();
        let last = dense.len() - 1;
        for (i, d) in dense.iter().enumerate() {
            let nw = d.fan_in * d.fan_out;
            let block = &mut params[d.offset..d.offset + d.len()];
            if i == last {
                for w in &mut block[..nw] {
                    *w = normal.sample(&mut rng);
                }
            } else {
                let bound = 1.0 / (d.fan_in as f64).sqrt();
                for v in block.iter_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
            }
        }
        Self {
            mode: AngleMode::Network,
            layout: Some(layout),
            params,
        }
    }

    /// Free per-face angles drawn from `N(0, 0.2)`.
    pub fn init_direct(faces: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        Self {
            mode: AngleMode::Direct,
            layout: None,
            params: (0..faces).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    pub fn init(mode: AngleMode, faces: usize, seed: u64) -> Self {
        match mode {
            AngleMode::Network => Self::init_network(seed),
            AngleMode::Direct => Self::init_direct(faces, seed),
        }
    }

    /// Rebuild a model from stored parameters.
    pub fn from_params(mode: AngleMode, params: Vec<f64>) -> Result<Self> {
        let layout = match mode {
            AngleMode::Network => {
                let l = Layout::build();
                if l.total != params.len() {
                    return Err(Error::DimensionMismatch {
                        expected: l.total,
                        got: params.len(),
                    });
                }
                Some(l)
            }
            AngleMode::Direct => None,
        };
        Ok(Self { mode, layout, params })
    }

    pub fn mode(&self) -> AngleMode {
        self.mode
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_features(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: features.ncols(),
            });
        }
        if self.mode == AngleMode::Direct && features.nrows() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: features.nrows(),
            });
        }
        Ok(())
    }

    /// Angle per feature row.
    pub fn predict_theta(&self, features: &ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let Some(layout) = &self.layout else {
            return Ok(self.params.clone());
        };
        let mut theta = Vec::with_capacity(features.nrows());
        for chunk in features.axis_chunks_iter(Axis(0), ROWS) {
            let tape = layout.forward(&self.params, chunk.to_owned());
            theta.extend(tape.sig.iter().map(|s| TAU * s));
        }
        Ok(theta)
    }

    /// Forward pass that keeps what the backward pass needs, within a
    /// memory budget; chunks beyond the budget are recomputed later.
    pub fn forward_train(&self, features: &ArrayView2<f64>) -> Result<(Vec<f64>, AngleTape)> {
        self.check_features(features)?;
        let Some(layout) = &self.layout else {
            return Ok((self.params.clone(), AngleTape { chunks: Vec::new() }));
        };
        let per_row = layout.tape_width() * std::mem::size_of::<f64>();
        let mut budget = TAPE_BUDGET_BYTES;
        let mut theta = Vec::with_capacity(features.nrows());
        let mut chunks = Vec::new();
        for chunk in features.axis_chunks_iter(Axis(0), ROWS) {
            let tape = layout.forward(&self.params, chunk.to_owned());
            theta.extend(tape.sig.iter().map(|s| TAU * s));
            let bytes = per_row * chunk.nrows();
            if bytes <= budget {
                budget -= bytes;
                chunks.push(Some(tape));
            } else {
                chunks.push(None);
            }
        }
        Ok((theta, AngleTape { chunks }))
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d theta`.
    pub fn backward(&self, features: &ArrayView2<f64>, tape: AngleTape, theta_bar: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_features(features)?;
        if theta_bar.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: theta_bar.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let Some(layout) = &self.layout else {
            for (g, t) in grad.iter_mut().zip(theta_bar) {
                *g += t;
            }
            return Ok(());
        };
        let mut tapes = tape.chunks.into_iter();
        for (i, chunk) in features.axis_chunks_iter(Axis(0), ROWS).enumerate() {
            let t = match tapes.next().flatten() {
                Some(t) => t,
                None => layout.forward(&self.params, chunk.to_owned()),
            };
            let lo = i * ROWS;
            layout.backward(&self.params, grad, &t, &theta_bar[lo..lo + chunk.nrows()]);
        }
        Ok(())
    }

    /// Cross field over a mesh from the current parameters.
    pub fn cross_field(&self, mesh: &TriMesh) -> Result<CrossField> {
        let theta = self.predict_theta(&face_features(mesh).view())?;
        CrossField::from_theta(theta, mesh.frames())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn frame() -> LocalFrame {
        LocalFrame::from_triangle([
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn cross_closed_forms() {
        let fr = frame();
        let (a, b) = cross_from_theta(0.0, &fr);
        assert_eq!((a, b), (fr.mu, fr.nu));
        let (a, b) = cross_from_theta(FRAC_PI_2, &fr);
        assert!((a - fr.nu).norm() < 1e-15 && (b + fr.mu).norm() < 1e-15);
        let (a, _) = cross_from_theta(FRAC_PI_4, &fr);
        let h = 0.5f64.sqrt();
        assert!((a - Vector3::new(h, h, 0.0)).norm() < 1e-15);
    }

    fn random_features(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, FEATURE_DIM), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn theta_in_range_and_rowwise() {
        let m = AngleModel::init_network(3);
        let mut x = random_features(40, 1);
        let row = x.row(5).to_owned();
        x.row_mut(17).assign(&row);
        let t = m.predict_theta(&x.view()).unwrap();
        assert!(t.iter().all(|t| (0.0..=TAU).contains(t)));
        assert_eq!(t[5].to_bits(), t[17].to_bits());
        let again = AngleModel::init_network(3).predict_theta(&x.view()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn wrong_feature_width_rejected() {
        let m = AngleModel::init_network(0);
        let x = Array2::zeros((3, 11));
        assert!(matches!(
            m.predict_theta(&x.view()),
            Err(Error::DimensionMismatch { expected: 12, got: 11 })
        ));
    }

    #[test]
    fn block_structure() {
        let l = Layout::build();
        let sizes: Vec<usize> = l.blocks.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 4, 6, 3, 3, 4, 6]);
        assert!(l.blocks[..3].iter().flatten().all(|b| b.0[0].fan_in == 256 && b.0[0].fan_out == 64));
        assert!(l.blocks[3..].iter().flatten().all(|b| b.0[0].fan_in == 512 && b.0[0].fan_out == 128));
        assert_eq!((l.head1.fan_in, l.head1.fan_out, l.head2.fan_out), (512, 32, 1));
        assert_eq!(l.stem.fan_in, 12);
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let m = AngleModel::init_network(9);
        let x = random_features(6, 4);
        let w: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
        let loss = |m: &AngleModel| -> f64 {
            m.predict_theta(&x.view())
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(t, w)| w * t.sin())
                .sum()
        };
        let (theta, tape) = m.forward_train(&x.view()).unwrap();
        let tbar: Vec<f64> = theta.iter().zip(&w).map(|(t, w)| w * t.cos()).collect();
        let mut grad = vec![0.0; m.param_count()];
        m.backward(&x.view(), tape, &tbar, &mut grad).unwrap();
        // Probe a spread of parameters across every stage of the network.
        let layout = Layout::build();
        let dense = layout.all_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in dense.iter().step_by(7).chain(dense.last()) {
            for _ in 0..2 {
                let i = d.offset + rng.gen_range(0..d.len());
                let h = 1e-6;
                let mut mp = m.clone();
                mp.params_mut()[i] += h;
                let mut mm = m.clone();
                mm.params_mut()[i] -= h;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
                let err = (fd - grad[i]).abs();
                assert!(err <= 1e-5 * grad[i].abs().max(1e-3), "param {i}: fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn direct_mode_passes_theta_through() {
        let m = AngleModel::init_direct(5, 1);
        let x = random_features(5, 0);
        assert_eq!(m.predict_theta(&x.view()).unwrap(), m.params());
        let (_, tape) = m.forward_train(&x.view()).unwrap();
        let mut grad = vec![0.0; 5];
        m.backward(&x.view(), tape, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut grad).unwrap();
        assert_eq!(grad, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn cross_field_invariants() {
        let mesh = crate::shapes::icosphere(1, 0.4);
        let field = AngleModel::init_network(1).cross_field(&mesh).unwrap();
        for f in 0..mesh.face_count() {
            let (a, b, n) = (field.alpha[f], field.beta[f], mesh.face_normals()[f]);
            assert!(a.dot(&b).abs() < 1e-7 && (a.norm() - 1.0).abs() < 1e-7 && (b.norm() - 1.0).abs() < 1e-7);
            assert!(a.dot(&n).abs() < 1e-7 && b.dot(&n).abs() < 1e-7);
        }
    }
}
