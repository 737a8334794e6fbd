//! Sine-activated signed distance network.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::{Activation, DerivativeBundle, LayerSpec, SineNet};

pub const HIDDEN_WIDTH: usize = 256;
pub const HIDDEN_LAYERS: usize = 4;
pub const OMEGA: f64 = 30.0;
/// Mesh space is normalized to `[-0.5, 0.5]^3`; the network sees `[-1, 1]^3`.
pub const INPUT_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SdfModel {
    pub net: SineNet,
}

pub fn layer_specs() -> Vec<LayerSpec> {
    let mut layers = vec![LayerSpec {
        fan_in: 3,
        fan_out: HIDDEN_WIDTH,
        omega: OMEGA,
        activation: Activation::Sine,
    }];
    for _ in 1..HIDDEN_LAYERS {
        layers.push(LayerSpec {
            fan_in: HIDDEN_WIDTH,
            fan_out: HIDDEN_WIDTH,
            omega: OMEGA,
            activation: Activation::Sine,
        });
    }
    layers.push(LayerSpec {
        fan_in: HIDDEN_WIDTH,
        fan_out: 1,
        omega: 1.0,
        activation: Activation::Identity,
    });
    layers
}

/// Freshly initialized model. First-layer weights are uniform in
/// `±1/fan_in`, later weights in `±sqrt(6/fan_in)/30`, biases in
/// `±1/sqrt(fan_in)`.
pub fn init_sdf(seed: u64) -> SdfModel {
    let mut net = SineNet::new(layer_specs(), INPUT_SCALE).expect("valid layer chain");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = net.layers().to_vec();
    for (l, spec) in specs.iter().enumerate() {
        let fan_in = spec.fan_in as f64;
        let wb = if l == 0 {
            1.0 / fan_in
        } else {
            (6.0 / fan_in).sqrt() / OMEGA
        };
        let bb = 1.0 / fan_in.sqrt();
        let wr = net.weight_range(l);
        let br = net.bias_range(l);
        let p = net.params_mut();
        for w in &mut p[wr] {
            *w = rng.gen_range(-wb..=wb);
        }
        for b in &mut p[br] {
            *b = rng.gen_range(-bb..=bb);
        }
    }
    SdfModel { net }
}

impl SdfModel {
    pub fn value(&self, x: &Point3<f64>) -> f64 {
        self.net.eval(x).expect("sdf network is 3 -> 1")
    }
}

/// Value, gradient and Hessian of the SDF at `x` (mesh space).
pub fn sdf_query(model: &SdfModel, x: &Point3<f64>) -> DerivativeBundle {
    model
        .net
        .eval_with_derivatives(x)
        .expect("sdf network is 3 -> 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture() {
        let m = init_sdf(0);
        let hidden: Vec<_> = m.net.layers().iter().filter(|l| l.activation == Activation::Sine).collect();
        assert_eq!(hidden.len(), 4);
        assert!(hidden.iter().all(|l| l.fan_out == 256));
        assert_eq!(m.net.param_count(), 4 * 256 + 3 * 256 * 257 + 257);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_sdf(42).net.params(), init_sdf(42).net.params());
        assert_ne!(init_sdf(42).net.params(), init_sdf(43).net.params());
    }

    #[test]
    fn weight_bounds() {
        let m = init_sdf(7);
        let first = &m.net.params()[m.net.weight_range(0)];
        assert!(first.iter().all(|w| w.abs() <= 1.0 / 3.0));
        let bound = (6.0f64 / 256.0).sqrt() / 30.0;
        for l in 1..5 {
            assert!(m.net.params()[m.net.weight_range(l)].iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn activation_spread_is_layer_independent() {
        let m = init_sdf(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sums = [(0.0, 0.0, 0usize); 4];
        for _ in 0..1000 {
            let x = Point3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let acts = m.net.activations(&x).unwrap();
            for (l, a) in acts.iter().take(4).enumerate() {
                for v in a {
                    sums[l].0 += v;
                    sums[l].1 += v * v;
                    sums[l].2 += 1;
                }
            }
        }
        let stds: Vec<f64> = sums
            .iter()
            .map(|(s, s2, n)| {
                let n = *n as f64;
                (s2 / n - (s / n).powi(2)).sqrt()
            })
            .collect();
        for l in 1..4 {
            let ratio = stds[l] / stds[0];
            assert!((0.5..=2.0).contains(&ratio), "layer {l}: stds {stds:?}");
        }
    }

    #[test]
    fn untrained_net_is_finite_on_grid() {
        let m = init_sdf(1);
        for i in 0..17 {
            for j in 0..17 {
                for k in 0..17 {
                    let c = |t: usize| -1.0 + 2.0 * t as f64 / 16.0;
                    assert!(m.value(&Point3::new(c(i), c(j), c(k))).is_finite());
                }
            }
        }
    }

    #[test]
    fn query_value_matches_plain_eval() {
        let m = init_sdf(5);
        let x = Point3::new(0.1, -0.2, 0.3);
        assert_eq!(sdf_query(&m, &x).value.to_bits(), m.value(&x).to_bits());
    }
}
