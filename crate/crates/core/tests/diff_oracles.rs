use nalgebra::{Matrix3, Point3, Vector3};
use neurcross::diff::{Activation, BundleAdjoint, DerivativeBundle, JetOrder, LayerSpec, SineNet};
use neurcross::sdf::init_sdf;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(seed: u64) -> SineNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut layers = Vec::new();
    let mut fan_in = 3;
    for _ in 0..depth {
        let w = rng.gen_range(2..=16);
        layers.push(LayerSpec {
            fan_in,
            fan_out: w,
            omega: rng.gen_range(1.0..4.0),
            activation: Activation::Sine,
        });
        fan_in = w;
    }
    layers.push(LayerSpec {
        fan_in,
        fan_out: 1,
        omega: 1.0,
        activation: Activation::Identity,
    });
    let mut net = SineNet::new(layers, rng.gen_range(0.5..2.0)).unwrap();
    for p in net.params_mut() {
        *p = rng.gen_range(-1.0..1.0);
    }
    for l in 0..net.layers().len() {
        let s = 1.0 / (net.layers()[l].fan_in as f64).sqrt();
        let r = net.weight_range(l);
        net.params_mut()[r].iter_mut().for_each(|w| *w *= s);
    }
    net
}

fn random_point(rng: &mut impl Rng) -> Point3<f64> {
    Point3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn fd_gradient(net: &SineNet, x: &Point3<f64>, h: f64) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let mut p = *x;
        let mut m = *x;
        p[i] += h;
        m[i] -= h;
        (net.eval(&p).unwrap() - net.eval(&m).unwrap()) / (2.0 * h)
    })
}

fn fd_hessian(net: &SineNet, x: &Point3<f64>, h: f64) -> Matrix3<f64> {
    let f = |di: f64, i: usize, dj: f64, j: usize| {
        let mut p = *x;
        p[i] += di;
        p[j] += dj;
        net.eval(&p).unwrap()
    };
    Matrix3::from_fn(|i, j| (f(h, i, h, j) - f(h, i, -h, j) - f(-h, i, h, j) + f(-h, i, -h, j)) / (4.0 * h * h))
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..20 {
        let net = random_net(seed);
        for _ in 0..3 {
            let x = random_point(&mut rng);
            let b = net.eval_with_derivatives(&x).unwrap();
            let g = fd_gradient(&net, &x, 1e-4);
            let h = fd_hessian(&net, &x, 1e-4);
            let gs = g.amax().max(1e-3);
            let hs = h.amax().max(1e-3);
            assert!((b.gradient - g).amax() / gs < 1e-4, "net {seed}: gradient {} vs {}", b.gradient, g);
            assert!((b.hessian - h).amax() / hs < 1e-4, "net {seed}: hessian {} vs {}", b.hessian, h);
        }
    }
}

#[test]
fn one_layer_sine_closed_form() {
    let mut net = SineNet::new(
        vec![LayerSpec {
            fan_in: 3,
            fan_out: 1,
            omega: 1.0,
            activation: Activation::Sine,
        }],
        1.0,
    )
    .unwrap();
    net.params_mut()[0] = 1.0;
    let b = net.eval_with_derivatives(&Point3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)).unwrap();
    assert!((b.value - 1.0).abs() < 1e-15);
    assert!(b.gradient.x.abs() < 1e-15);
    assert!((b.hessian[(0, 0)] + 1.0).abs() < 1e-15);
}

#[test]
fn zero_weights_give_a_constant() {
    let mut net = random_net(4);
    for l in 0..net.layers().len() {
        let r = net.weight_range(l);
        net.params_mut()[r].iter_mut().for_each(|w| *w = 0.0);
    }
    let b = net.eval_with_derivatives(&Point3::new(0.1, -0.2, 0.3)).unwrap();
    let c = net.eval(&Point3::new(-0.4, 0.4, 0.0)).unwrap();
    assert_eq!(b.value, c);
    assert_eq!(b.gradient, Vector3::zeros());
    assert_eq!(b.hessian, Matrix3::zeros());
}

/// Loss over a few points mixing value, gradient and Hessian terms:
/// `sum f^2 + (|grad f| - 1)^2 + |H n|`.
fn mixed_loss(n: Vector3<f64>) -> impl Fn(&[DerivativeBundle]) -> (f64, Vec<BundleAdjoint>) {
    move |bs| {
        let mut total = 0.0;
        let mut adj = Vec::with_capacity(bs.len());
        for b in bs {
            let g = b.gradient.norm();
            let hn = b.hessian * n;
            let hn_norm = hn.norm();
            total += b.value * b.value + (g - 1.0).powi(2) + hn_norm;
            adj.push(BundleAdjoint {
                value: 2.0 * b.value,
                gradient: b.gradient * (2.0 * (g - 1.0) / g),
                hessian: (hn / hn_norm) * n.transpose(),
            });
        }
        (total, adj)
    }
}

fn loss_value(net: &SineNet, pts: &[Point3<f64>], n: Vector3<f64>) -> f64 {
    let bs: Vec<_> = pts.iter().map(|x| net.eval_with_derivatives(x).unwrap()).collect();
    mixed_loss(n)(&bs).0
}

#[test]
fn parameter_gradient_matches_directional_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = Vector3::new(0.3, -0.5, 0.8).normalize();
    for seed in 0..20 {
        let net = random_net(100 + seed);
        let pts: Vec<_> = (0..4).map(|_| random_point(&mut rng)).collect();
        let (_, grad) = net.loss_param_gradient(&pts, JetOrder::Hessian, mixed_loss(n)).unwrap();
        let dir: Vec<f64> = (0..grad.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-5;
        let shifted = |s: f64| {
            let mut m = net.clone();
            m.params_mut().iter_mut().zip(&dir).for_each(|(p, d)| *p += s * d);
            loss_value(&m, &pts, n)
        };
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let an: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        assert!(rel(an, fd, 1e-3) < 1e-3, "net {seed}: {an} vs {fd}");
    }
}

#[test]
fn squared_value_gradient_per_parameter() {
    let net = random_net(55);
    let x0 = [Point3::new(0.2, 0.1, -0.3)];
    let (_, grad) = net
        .loss_param_gradient(&x0, JetOrder::Value, |bs| {
            (bs[0].value.powi(2), vec![BundleAdjoint { value: 2.0 * bs[0].value, ..Default::default() }])
        })
        .unwrap();
    for (i, g) in grad.iter().enumerate() {
        let mut p = net.clone();
        let mut m = net.clone();
        p.params_mut()[i] += 1e-6;
        m.params_mut()[i] -= 1e-6;
        let fd = (p.eval(&x0[0]).unwrap().powi(2) - m.eval(&x0[0]).unwrap().powi(2)) / 2e-6;
        assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-4), "param {i}: {g} vs {fd}");
    }
}

#[test]
fn derivative_only_loss_ignores_output_bias() {
    let net = random_net(8);
    let pts = [Point3::new(0.1, 0.2, 0.3), Point3::new(-0.3, 0.0, 0.1)];
    let (_, grad) = net
        .loss_param_gradient(&pts, JetOrder::Hessian, |bs| {
            let v = bs.iter().map(|b| b.gradient.norm_squared() + b.hessian.norm_squared()).sum();
            let adj = bs
                .iter()
                .map(|b| BundleAdjoint {
                    value: 0.0,
                    gradient: b.gradient * 2.0,
                    hessian: b.hessian * 2.0,
                })
                .collect();
            (v, adj)
        })
        .unwrap();
    let last = net.layers().len() - 1;
    assert!(grad[net.bias_range(last)].iter().all(|&g| g == 0.0));
    assert!(grad.iter().any(|&g| g != 0.0));
}

#[test]
fn non_finite_loss_is_reported() {
    let net = random_net(1);
    let err = net
        .loss_param_gradient(&[Point3::origin()], JetOrder::Value, |_| (f64::NAN, vec![BundleAdjoint::default()]))
        .unwrap_err();
    assert!(err.to_string().contains("non-finite"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hessian_is_symmetric(seed in 0u64..1000, x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5) {
        let b = random_net(seed).eval_with_derivatives(&Point3::new(x, y, z)).unwrap();
        prop_assert!((b.hessian - b.hessian.transpose()).amax() < 1e-9);
    }

    #[test]
    fn values_agree_bit_for_bit(seed in 0u64..1000, x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5) {
        let net = random_net(seed);
        let p = Point3::new(x, y, z);
        let v = net.eval(&p).unwrap();
        prop_assert_eq!(net.eval_with_derivatives(&p).unwrap().value, v);
        // Batches go through BLAS, whose summation order is its own.
        for order in [JetOrder::Value, JetOrder::Gradient, JetOrder::Hessian] {
            let b = net.query_batch(&[p], order).unwrap()[0].value;
            prop_assert!((b - v).abs() <= 1e-13 * v.abs().max(1.0));
        }
    }

    #[test]
    fn parameter_gradient_is_linear_in_the_loss(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let net = random_net(seed);
        let pts = [Point3::new(0.1, -0.2, 0.25), Point3::new(-0.3, 0.3, 0.0)];
        let n = Vector3::new(0.0, 0.6, 0.8);
        let l1 = |bs: &[DerivativeBundle]| {
            let v: f64 = bs.iter().map(|b| b.value * b.value).sum();
            (v, bs.iter().map(|b| BundleAdjoint { value: 2.0 * b.value, ..Default::default() }).collect::<Vec<_>>())
        };
        let (_, g1) = net.loss_param_gradient(&pts, JetOrder::Hessian, l1).unwrap();
        let (_, g2) = net.loss_param_gradient(&pts, JetOrder::Hessian, mixed_loss(n)).unwrap();
        let (_, g) = net.loss_param_gradient(&pts, JetOrder::Hessian, |bs| {
            let (v1, a1) = l1(bs);
            let (v2, a2) = mixed_loss(n)(bs);
            let adj = a1.iter().zip(&a2).map(|(p, q)| {
                let mut s = p.scaled(a);
                s += q.scaled(b);
                s
            }).collect();
            (a * v1 + b * v2, adj)
        }).unwrap();
        let scale = g.iter().map(|v| v.abs()).fold(1e-12, f64::max);
        for i in 0..g.len() {
            prop_assert!((g[i] - (a * g1[i] + b * g2[i])).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn full_size_sdf_paths_agree() {
    let sdf = init_sdf(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<_> = (0..700).map(|_| random_point(&mut rng)).collect();
    let batch = sdf.net.query_batch(&pts, JetOrder::Hessian).unwrap();
    for (p, b) in pts.iter().zip(&batch).step_by(37) {
        let single = sdf.net.eval_with_derivatives(p).unwrap();
        assert_eq!(sdf.net.eval(p).unwrap(), single.value);
        assert!((single.value - b.value).abs() < 1e-12);
        assert!((single.gradient - b.gradient).amax() < 1e-9 * b.gradient.amax().max(1.0));
        assert!((single.hessian - b.hessian).amax() < 1e-9 * b.hessian.amax().max(1.0));
    }
}
