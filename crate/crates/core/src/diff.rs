//! Second-order jets through sine-activated MLPs, with reverse-mode
//! parameter gradients.
//!
//! Every layer computes `z = omega * (W a + b)` followed by `sin` (or the
//! identity for the output layer). Alongside the value, the forward pass
//! carries the input-gradient and the input-Hessian of every unit, so the
//! output jet is exact to rounding. The backward pass is the adjoint of
//! that jet propagation: for a scalar loss that depends on the output
//! value, gradient and Hessian, it yields the exact gradient with respect
//! to every weight and bias, including the third-order terms that arise
//! when the loss involves the Hessian.
//!
//! Batched passes store jets as matrices with one row per (point,
//! component) pair, which turns every layer into a single GEMM.

use nalgebra::{Matrix3, Point3, Vector3};
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::linalg::gemm;

/// Points processed per batched chunk; bounds the jet buffers to a few
/// tens of megabytes.
pub const CHUNK: usize = 512;

/// Symmetric Hessian components in storage order.
const SYM: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Sine,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Frequency multiplier applied to the affine map.
    pub omega: f64,
    pub activation: Activation,
}

/// How many derivatives a batched pass carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    pub const fn components(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        }
    }
}

/// Value, input-gradient and input-Hessian of a scalar network output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl DerivativeBundle {
    pub fn zero() -> Self {
        Self {
            value: 0.0,
            gradient: Vector3::zeros(),
            hessian: Matrix3::zeros(),
        }
    }
}

/// Partial derivatives of a loss with respect to the entries of a
/// [`DerivativeBundle`]. Hessian entries are treated as nine independent
/// variables; symmetry is accounted for by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleAdjoint {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl Default for BundleAdjoint {
    fn default() -> Self {
        Self {
            value: 0.0,
            gradient: Vector3::zeros(),
            hessian: Matrix3::zeros(),
        }
    }
}

impl BundleAdjoint {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            value: self.value * k,
            gradient: self.gradient * k,
            hessian: self.hessian * k,
        }
    }
}

impl std::ops::AddAssign for BundleAdjoint {
    fn add_assign(&mut self, rhs: Self) {
        self.value += rhs.value;
        self.gradient += rhs.gradient;
        self.hessian += rhs.hessian;
    }
}

/// Scalar-output MLP with per-layer frequency multipliers. Parameters are a
/// single flat vector: for each layer its row-major weight matrix
/// (`fan_out x fan_in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SineNet {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    input_scale: f64,
}

/// Stored activations of a batched forward pass.
struct Tape {
    order: JetOrder,
    /// Per layer: (input jet, pre-activation jet).
    layers: Vec<(Array2<f64>, Array2<f64>)>,
}

impl SineNet {
    /// Network with all parameters zero. `input_scale` multiplies the input
    /// before the first layer; derivatives are taken with respect to the
    /// unscaled input.
    pub fn new(layers: Vec<LayerSpec>, input_scale: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].fan_out != w[1].fan_in {
                return Err(Error::DimensionMismatch {
                    expected: w[0].fan_out,
                    got: w[1].fan_in,
                });
            }
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.fan_out * (l.fan_in + 1);
        }
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            input_scale,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
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

    /// Range of the weight matrix of layer `l` inside the parameter vector.
    pub fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let spec = &self.layers[l];
        let start = self.offsets[l];
        start..start + spec.fan_out * spec.fan_in
    }

    /// Range of the bias vector of layer `l` inside the parameter vector.
    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let w = self.weight_range(l);
        w.end..w.end + self.layers[l].fan_out
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let spec = &self.layers[l];
        ArrayView2::from_shape((spec.fan_out, spec.fan_in), &self.params[self.weight_range(l)])
            .expect("weight shape")
    }

    fn bias(&self, l: usize) -> &[f64] {
        &self.params[self.bias_range(l)]
    }

    fn check_scalar_field(&self) -> Result<()> {
        if self.in_dim() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: self.in_dim(),
            });
        }
        if self.out_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.out_dim(),
            });
        }
        Ok(())
    }

    /// Plain forward evaluation.
    pub fn eval(&self, x: &Point3<f64>) -> Result<f64> {
        Ok(self.activations(x)?.pop().expect("at least one layer")[0])
    }

    /// Outputs of every layer (after its activation) at `x`.
    pub fn activations(&self, x: &Point3<f64>) -> Result<Vec<Vec<f64>>> {
        self.check_scalar_field()?;
        let mut a: Vec<f64> = (0..3).map(|k| self.input_scale * x[k]).collect();
        let mut out = Vec::with_capacity(self.layers.len());
        for (l, spec) in self.layers.iter().enumerate() {
            let w = self.weight(l);
            let b = self.bias(l);
            a = (0..spec.fan_out)
                .map(|i| {
                    let z = affine_value(w.row(i).as_slice().unwrap(), &a, b[i], spec.omega);
                    match spec.activation {
                        Activation::Sine => crate::trig::sin(z),
                        Activation::Identity => z,
                    }
                })
                .collect();
            out.push(a.clone());
        }
        Ok(out)
    }

    /// Value, gradient and Hessian of the network at `x`.
    pub fn eval_with_derivatives(&self, x: &Point3<f64>) -> Result<DerivativeBundle> {
        self.check_scalar_field()?;
        let s = self.input_scale;
        let mut val: Vec<f64> = (0..3).map(|k| s * x[k]).collect();
        let mut grad: Vec<[f64; 3]> = (0..3)
            .map(|k| {
                let mut g = [0.0; 3];
                g[k] = s;
                g
            })
            .collect();
        let mut hess: Vec<[f64; 6]> = vec![[0.0; 6]; 3];
        for (l, spec) in self.layers.iter().enumerate() {
            let w = self.weight(l);
            let b = self.bias(l);
            let mut nv = Vec::with_capacity(spec.fan_out);
            let mut ng = Vec::with_capacity(spec.fan_out);
            let mut nh = Vec::with_capacity(spec.fan_out);
            for (i, &bi) in b.iter().enumerate() {
                let row = w.row(i);
                let row = row.as_slice().unwrap();
                let zv = affine_value(row, &val, bi, spec.omega);
                let mut zg = [0.0; 3];
                let mut zh = [0.0; 6];
                for (j, &wij) in row.iter().enumerate() {
                    for d in 0..3 {
                        zg[d] += wij * grad[j][d];
                    }
                    for t in 0..6 {
                        zh[t] += wij * hess[j][t];
                    }
                }
                zg.iter_mut().for_each(|g| *g *= spec.omega);
                zh.iter_mut().for_each(|h| *h *= spec.omega);
                match spec.activation {
                    Activation::Identity => {
                        nv.push(zv);
                        ng.push(zg);
                        nh.push(zh);
                    }
                    Activation::Sine => {
                        let (sn, cs) = crate::trig::sin_cos(zv);
                        nv.push(sn);
                        ng.push(zg.map(|g| cs * g));
                        let mut h = [0.0; 6];
                        for (t, &(p, q)) in SYM.iter().enumerate() {
                            h[t] = cs * zh[t] - sn * zg[p] * zg[q];
                        }
                        nh.push(h);
                    }
                }
            }
            val = nv;
            grad = ng;
            hess = nh;
        }
        Ok(DerivativeBundle {
            value: val[0],
            gradient: Vector3::from(grad[0]),
            hessian: sym_to_matrix(&hess[0]),
        })
    }

    fn forward_batch(&self, points: &[Point3<f64>], order: JetOrder, keep: bool) -> (Array2<f64>, Tape) {
        let k = order.components();
        let n = points.len();
        let s = self.input_scale;
        let mut a = Array2::<f64>::zeros((n * k, 3));
        for (p, x) in points.iter().enumerate() {
            for d in 0..3 {
                a[[p * k, d]] = s * x[d];
                if k > 1 {
                    a[[p * k + 1 + d, d]] = s;
                }
            }
        }
        let mut tape = Tape {
            order,
            layers: Vec::new(),
        };
        for (l, spec) in self.layers.iter().enumerate() {
            let mut z = Array2::<f64>::zeros((n * k, spec.fan_out));
            gemm(spec.omega, &a.view(), &self.weight(l).t(), 0.0, &mut z.view_mut());
            let b = self.bias(l);
            for p in 0..n {
                let mut row = z.row_mut(p * k);
                for (zi, bi) in row.iter_mut().zip(b) {
                    *zi += spec.omega * bi;
                }
            }
            let next = match spec.activation {
                Activation::Identity => z.clone(),
                Activation::Sine => sine_forward(&z, n, order),
            };
            if keep {
                tape.layers.push((a, z));
            }
            a = next;
        }
        (a, tape)
    }

    fn backward_batch(&self, tape: Tape, out_adjoint: Array2<f64>, grad: &mut [f64]) {
        let order = tape.order;
        let k = order.components();
        let mut abar = out_adjoint;
        for (l, (a_in, z)) in tape.layers.into_iter().enumerate().rev() {
            let spec = self.layers[l];
            let zbar = match spec.activation {
                Activation::Identity => abar,
                Activation::Sine => sine_backward(&z, &abar, order),
            };
            let n = zbar.nrows() / k;
            {
                let wr = self.weight_range(l);
                let mut gw =
                    ArrayViewMut2::from_shape((spec.fan_out, spec.fan_in), &mut grad[wr]).unwrap();
                gemm(spec.omega, &zbar.t(), &a_in.view(), 1.0, &mut gw);
            }
            let br = self.bias_range(l);
            let gb = &mut grad[br];
            for p in 0..n {
                for (g, zb) in gb.iter_mut().zip(zbar.row(p * k)) {
                    *g += spec.omega * zb;
                }
            }
            if l > 0 {
                let mut next = Array2::<f64>::zeros((zbar.nrows(), spec.fan_in));
                gemm(spec.omega, &zbar.view(), &self.weight(l), 0.0, &mut next.view_mut());
                abar = next;
            } else {
                break;
            }
        }
    }

    /// Batched evaluation of `order` derivatives at many points.
    pub fn query_batch(&self, points: &[Point3<f64>], order: JetOrder) -> Result<Vec<DerivativeBundle>> {
        self.check_scalar_field()?;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK) {
            let (jets, _) = self.forward_batch(chunk, order, false);
            out.extend(jets_to_bundles(&jets, chunk.len(), order));
        }
        Ok(out)
    }

    /// Runs forward passes over `points` in chunks, asks `adjoint` for the
    /// loss sensitivities of each chunk's bundles, and accumulates the
    /// resulting parameter gradient into `grad`. `adjoint` receives the index
    /// of the chunk's first point.
    pub fn accumulate_gradient<F>(
        &self,
        points: &[Point3<f64>],
        order: JetOrder,
        grad: &mut [f64],
        mut adjoint: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &[DerivativeBundle]) -> Vec<BundleAdjoint>,
    {
        self.check_scalar_field()?;
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut start = 0;
        for chunk in points.chunks(CHUNK) {
            let (jets, tape) = self.forward_batch(chunk, order, true);
            let bundles = jets_to_bundles(&jets, chunk.len(), order);
            let adj = adjoint(start, &bundles);
            assert_eq!(adj.len(), chunk.len(), "one adjoint per point");
            let seed = adjoints_to_jets(&adj, order);
            self.backward_batch(tape, seed, grad);
            start += chunk.len();
        }
        Ok(())
    }

    /// Gradient of a scalar loss of the bundles at `points` with respect to
    /// every parameter. `loss` returns the loss value and its partial
    /// derivatives with respect to each bundle.
    pub fn loss_param_gradient<F>(&self, points: &[Point3<f64>], order: JetOrder, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&[DerivativeBundle]) -> (f64, Vec<BundleAdjoint>),
    {
        self.check_scalar_field()?;
        let (jets, tape) = self.forward_batch(points, order, true);
        let bundles = jets_to_bundles(&jets, points.len(), order);
        let (value, adj) = loss(&bundles);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                term: "loss".into(),
                iter: None,
            });
        }
        if adj.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: adj.len(),
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        self.backward_batch(tape, adjoints_to_jets(&adj, order), &mut grad);
        Ok((value, grad))
    }
}

/// `omega * (w . a + b)` with a fixed summation order, shared by every
/// scalar evaluation path.
#[inline]
fn affine_value(w: &[f64], a: &[f64], b: f64, omega: f64) -> f64 {
    let mut acc = 0.0;
    for (wi, ai) in w.iter().zip(a) {
        acc += wi * ai;
    }
    omega * (acc + b)
}

fn sym_to_matrix(h: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(h[0], h[1], h[2], h[1], h[3], h[4], h[2], h[4], h[5])
}

fn jets_to_bundles(jets: &Array2<f64>, n: usize, order: JetOrder) -> Vec<DerivativeBundle> {
    let k = order.components();
    (0..n)
        .map(|p| {
            let c = |i: usize| jets[[p * k + i, 0]];
            let mut b = DerivativeBundle::zero();
            b.value = c(0);
            if k >= 4 {
                b.gradient = Vector3::new(c(1), c(2), c(3));
            }
            if k == 10 {
                b.hessian = sym_to_matrix(&[c(4), c(5), c(6), c(7), c(8), c(9)]);
            }
            b
        })
        .collect()
}

fn adjoints_to_jets(adj: &[BundleAdjoint], order: JetOrder) -> Array2<f64> {
    let k = order.components();
    let mut out = Array2::<f64>::zeros((adj.len() * k, 1));
    for (p, a) in adj.iter().enumerate() {
        out[[p * k, 0]] = a.value;
        if k >= 4 {
            for d in 0..3 {
                out[[p * k + 1 + d, 0]] = a.gradient[d];
            }
        }
        if k == 10 {
            for (t, &(i, j)) in SYM.iter().enumerate() {
                let v = if i == j {
                    a.hessian[(i, i)]
                } else {
                    a.hessian[(i, j)] + a.hessian[(j, i)]
                };
                out[[p * k + 4 + t, 0]] = v;
            }
        }
    }
    out
}

fn sine_forward(z: &Array2<f64>, n: usize, order: JetOrder) -> Array2<f64> {
    let k = order.components();
    let m = z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let mut out = vec![0.0; zs.len()];
    let mut sn = vec![0.0; m];
    let mut cs = vec![0.0; m];
    for p in 0..n {
        let zb = &zs[p * k * m..(p + 1) * k * m];
        let ab = &mut out[p * k * m..(p + 1) * k * m];
        for i in 0..m {
            let (s, c) = crate::trig::sin_cos(zb[i]);
            sn[i] = s;
            cs[i] = c;
            ab[i] = s;
        }
        if k >= 4 {
            for d in 1..4 {
                let zr = &zb[d * m..(d + 1) * m];
                let ar = &mut ab[d * m..(d + 1) * m];
                for i in 0..m {
                    ar[i] = cs[i] * zr[i];
                }
            }
        }
        if k == 10 {
            for (t, &(u, v)) in SYM.iter().enumerate() {
                let zh = &zb[(4 + t) * m..(5 + t) * m];
                let zu = &zb[(1 + u) * m..(2 + u) * m];
                let zv = &zb[(1 + v) * m..(2 + v) * m];
                let ar = &mut ab[(4 + t) * m..(5 + t) * m];
                for i in 0..m {
                    ar[i] = cs[i] * zh[i] - sn[i] * zu[i] * zv[i];
                }
            }
        }
    }
    Array2::from_shape_vec(z.dim(), out).unwrap()
}

fn sine_backward(z: &Array2<f64>, abar: &Array2<f64>, order: JetOrder) -> Array2<f64> {
    let k = order.components();
    let m = z.ncols();
    let n = z.nrows() / k;
    let zs = z.as_slice().expect("standard layout");
    let abs = abar.as_slice().expect("standard layout");
    let mut out = vec![0.0; zs.len()];
    let mut sn = vec![0.0; m];
    let mut cs = vec![0.0; m];
    for p in 0..n {
        let range = p * k * m..(p + 1) * k * m;
        let zb = &zs[range.clone()];
        let ab = &abs[range.clone()];
        let ob = &mut out[range];
        let row = |r: usize| r * m..(r + 1) * m;
        for i in 0..m {
            let (s, c) = crate::trig::sin_cos(zb[i]);
            sn[i] = s;
            cs[i] = c;
            ob[i] = ab[i] * c;
        }
        if k >= 4 {
            for d in 0..3 {
                let g = &zb[row(1 + d)];
                let ga = &ab[row(1 + d)];
                let (ov, og) = ob.split_at_mut((1 + d) * m);
                let og = &mut og[..m];
                for i in 0..m {
                    ov[i] -= sn[i] * ga[i] * g[i];
                    og[i] = cs[i] * ga[i];
                }
            }
        }
        if k == 10 {
            for (t, &(u, w)) in SYM.iter().enumerate() {
                let h = &zb[row(4 + t)];
                let ha = &ab[row(4 + t)];
                let gu = &zb[row(1 + u)];
                let gw = &zb[row(1 + w)];
                {
                    let (head, tail) = ob.split_at_mut(4 * m);
                    let oh = &mut tail[t * m..(t + 1) * m];
                    for i in 0..m {
                        oh[i] = cs[i] * ha[i];
                        head[i] -= ha[i] * (sn[i] * h[i] + cs[i] * gu[i] * gw[i]);
                    }
                }
                for i in 0..m {
                    let s = sn[i] * ha[i];
                    ob[(1 + u) * m + i] -= s * gw[i];
                    ob[(1 + w) * m + i] -= s * gu[i];
                }
            }
        }
    }
    Array2::from_shape_vec(z.dim(), out).unwrap()
}

/// Per-layer (fan_out x fan_in) dense map used by the angle network:
/// `y = x W^T + b` on row-major batches.
pub(crate) fn dense_forward(x: &ArrayView2<f64>, w: &ArrayView2<f64>, b: &[f64]) -> Array2<f64> {
    let mut y = Array2::<f64>::zeros((x.nrows(), w.nrows()));
    gemm(1.0, x, &w.t(), 0.0, &mut y.view_mut());
    for mut row in y.axis_iter_mut(Axis(0)) {
        for (yi, bi) in row.iter_mut().zip(b) {
            *yi += bi;
        }
    }
    y
}

/// Adjoint of [`dense_forward`]: accumulates weight and bias gradients and
/// returns the input adjoint when `need_input` is set.
pub(crate) fn dense_backward(
    x: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    ybar: &ArrayView2<f64>,
    gw: &mut ArrayViewMut2<f64>,
    gb: &mut [f64],
    need_input: bool,
) -> Option<Array2<f64>> {
    gemm(1.0, &ybar.t(), x, 1.0, gw);
    for row in ybar.axis_iter(Axis(0)) {
        for (g, y) in gb.iter_mut().zip(row) {
            *g += y;
        }
    }
    need_input.then(|| {
        let mut xbar = Array2::<f64>::zeros((ybar.nrows(), w.ncols()));
        gemm(1.0, ybar, w, 0.0, &mut xbar.view_mut());
        xbar
    })
}
