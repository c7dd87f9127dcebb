use ndarray::Array2;

use super::*;
use crate::error::OdpError;
use crate::tensor::ImageTensor;

fn random_image(rng: &mut Rng, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.uniform())
}

fn randomize(net: &mut PriorNet, rng: &mut Rng, scale: f64) {
    for l in &mut net.layers {
        l.weight.mapv_inplace(|_| scale * rng.normal());
        l.bias.mapv_inplace(|_| 0.1 * rng.normal());
    }
}

#[test]
fn xavier_variance_matches_glorot() {
    let cfg = PriorNetConfig {
        depth: 2,
        channels: 1,
        kernel_size: 3,
        ..PriorNetConfig::new(2, 1)
    };
    let mut rng = Rng::new(11);
    let mut samples = Vec::new();
    while samples.len() < 1000 {
        let net = PriorNet::xavier(&cfg, &mut rng);
        for l in &net.layers {
            samples.extend(l.weight.iter().copied());
        }
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let target = 2.0 / (9.0 + 9.0);
    assert!((var - target).abs() < 0.2 * target, "var {var} target {target}");
}

#[test]
fn init_is_deterministic_with_zero_bias() {
    let cfg = PriorNetConfig::new(4, 5);
    let a = init_prior(&cfg, 3, &mut Rng::new(3)).unwrap();
    let b = init_prior(&cfg, 3, &mut Rng::new(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.nets.len(), 3);
    for net in &a.nets {
        for l in &net.layers {
            assert!(l.bias.iter().all(|&v| v == 0.0));
        }
    }
    let shared = PriorNetConfig {
        share_across_iterations: true,
        ..cfg
    };
    let s = init_prior(&shared, 3, &mut Rng::new(3)).unwrap();
    assert_eq!(s.nets.len(), 1);
    assert!(std::ptr::eq(s.net(0), s.net(2)));
}

#[test]
fn invalid_configs_rejected() {
    assert!(PriorNetConfig::new(1, 4).validate().is_err());
    assert!(PriorNetConfig::new(3, 0).validate().is_err());
    let even = PriorNetConfig {
        kernel_size: 4,
        ..PriorNetConfig::new(3, 2)
    };
    assert!(even.validate().is_err());
}

#[test]
fn zero_net_is_zero_function() {
    let net = PriorNet::zeros(&PriorNetConfig::new(5, 8));
    let mut rng = Rng::new(1);
    let out = net.forward(random_image(&mut rng, 7, 9).view()).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn output_shape_matches_input() {
    let mut rng = Rng::new(2);
    for cfg in [
        PriorNetConfig::new(2, 1),
        PriorNetConfig {
            kernel_size: 5,
            padding: Padding::Circular,
            ..PriorNetConfig::new(3, 4)
        },
    ] {
        let net = PriorNet::xavier(&cfg, &mut rng);
        for &(h, w) in &[(5, 5), (6, 11), (13, 7)] {
            let out = net.forward(random_image(&mut rng, h, w).view()).unwrap();
            assert_eq!(out.dim(), (h, w));
        }
    }
}

#[test]
fn tiny_net_matches_scalar_loop() {
    let mut rng = Rng::new(4);
    let cfg = PriorNetConfig::new(2, 1);
    let mut net = PriorNet::zeros(&cfg);
    randomize(&mut net, &mut rng, 1.0);
    let x = random_image(&mut rng, 5, 5);

    let conv = |inp: &Array2<f64>, wt: &Array2<f64>, b: f64| {
        let mut out = Array2::zeros((5, 5));
        for i in 0..5i32 {
            for j in 0..5i32 {
                let mut acc = b;
                for di in 0..3i32 {
                    for dj in 0..3i32 {
                        let (si, sj) = (i + di - 1, j + dj - 1);
                        if (0..5).contains(&si) && (0..5).contains(&sj) {
                            acc += wt[(0, (di * 3 + dj) as usize)] * inp[(si as usize, sj as usize)];
                        }
                    }
                }
                out[(i as usize, j as usize)] = acc;
            }
        }
        out
    };
    let l0 = &net.layers[0];
    let l1 = &net.layers[1];
    let hidden = conv(&x, &l0.weight, l0.bias[0]).mapv(|v: f64| v.max(0.0));
    let oracle = conv(&hidden, &l1.weight, l1.bias[0]);
    let out = net.forward(x.view()).unwrap();
    let err = (&out - &oracle).iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn prior_step_on_tensor_and_mismatch() {
    let mut rng = Rng::new(5);
    let net = PriorNet::xavier(&PriorNetConfig::new(3, 2), &mut rng);
    let planes = vec![random_image(&mut rng, 6, 6), random_image(&mut rng, 6, 6)];
    let t = ImageTensor::from_planes(&planes).unwrap();
    let out = prior_step(&t, &net).unwrap();
    assert_eq!(out.shape(), (2, 1, 6, 6));
    let second = net.forward(planes[1].view()).unwrap();
    assert_eq!(out.plane(1, 0).unwrap().to_owned(), second);

    let mut bad = net.clone();
    bad.layers[0] = ConvLayer::zeros(2, 2, 3);
    assert!(matches!(bad.forward(planes[0].view()), Err(OdpError::Config(_))));
}

#[test]
fn zero_upstream_gradient_gives_zero_grads() {
    let mut rng = Rng::new(6);
    let net = PriorNet::xavier(&PriorNetConfig::new(3, 4), &mut rng);
    let x = random_image(&mut rng, 5, 6);
    let (_, cache) = net.forward_cached(x.view()).unwrap();
    let (gx, grads) = net.backward(&cache, Array2::zeros((5, 6)).view());
    assert!(gx.iter().all(|&v| v == 0.0));
    for (w, b) in &grads.layers {
        assert!(w.iter().all(|&v| v == 0.0) && b.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn single_pixel_chain_rule() {
    // out = w1 * relu(w0 * x + b0) + b1 with 1x1 kernels and one channel
    let cfg = PriorNetConfig {
        kernel_size: 1,
        ..PriorNetConfig::new(2, 1)
    };
    let mut net = PriorNet::zeros(&cfg);
    let (w0, b0, w1, b1, x) = (0.7, 0.2, -1.5, 0.3, 0.9);
    net.layers[0].weight[(0, 0)] = w0;
    net.layers[0].bias[0] = b0;
    net.layers[1].weight[(0, 0)] = w1;
    net.layers[1].bias[0] = b1;
    let input = Array2::from_elem((1, 1), x);
    let (out, cache) = net.forward_cached(input.view()).unwrap();
    let hidden: f64 = w0 * x + b0;
    assert!((out[(0, 0)] - (w1 * hidden + b1)).abs() < 1e-15);
    let g = 2.0;
    let (gx, grads) = net.backward(&cache, Array2::from_elem((1, 1), g).view());
    assert!((grads.layers[1].0[(0, 0)] - g * hidden).abs() < 1e-15);
    assert!((grads.layers[1].1[0] - g).abs() < 1e-15);
    assert!((grads.layers[0].0[(0, 0)] - g * w1 * x).abs() < 1e-15);
    assert!((grads.layers[0].1[0] - g * w1).abs() < 1e-15);
    assert!((gx[(0, 0)] - g * w1 * w0).abs() < 1e-15);
}

fn loss(net: &PriorNet, x: &Array2<f64>, probe: &Array2<f64>) -> f64 {
    (&net.forward(x.view()).unwrap() * probe).sum()
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = Rng::new(8);
    for (act, pad) in [
        (Activation::Relu, Padding::Zero),
        (Activation::Tanh, Padding::Circular),
    ] {
        let cfg = PriorNetConfig {
            activation: act,
            padding: pad,
            ..PriorNetConfig::new(2, 3)
        };
        let mut net = PriorNet::zeros(&cfg);
        randomize(&mut net, &mut rng, 0.5);
        let x = random_image(&mut rng, 5, 4);
        let probe = Array2::from_shape_fn((5, 4), |_| rng.normal());
        let (_, cache) = net.forward_cached(x.view()).unwrap();
        let (gx, grads) = net.backward(&cache, probe.view());
        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!((analytic - numeric).abs() / scale < 1e-3, "{analytic} vs {numeric}");
        };
        for l in 0..2 {
            for idx in 0..net.layers[l].weight.len() {
                let (o, i) = (idx / net.layers[l].weight.ncols(), idx % net.layers[l].weight.ncols());
                let mut p = net.clone();
                p.layers[l].weight[(o, i)] += h;
                let mut m = net.clone();
                m.layers[l].weight[(o, i)] -= h;
                let fd = (loss(&p, &x, &probe) - loss(&m, &x, &probe)) / (2.0 * h);
                check(grads.layers[l].0[(o, i)], fd);
            }
            for o in 0..net.layers[l].bias.len() {
                let mut p = net.clone();
                p.layers[l].bias[o] += h;
                let mut m = net.clone();
                m.layers[l].bias[o] -= h;
                let fd = (loss(&p, &x, &probe) - loss(&m, &x, &probe)) / (2.0 * h);
                check(grads.layers[l].1[o], fd);
            }
        }
        for i in 0..5 {
            for j in 0..4 {
                let mut xp = x.clone();
                xp[(i, j)] += h;
                let mut xm = x.clone();
                xm[(i, j)] -= h;
                let fd = (loss(&net, &xp, &probe) - loss(&net, &xm, &probe)) / (2.0 * h);
                check(gx[(i, j)], fd);
            }
        }
    }
}

#[test]
fn parameter_count_formula() {
    let cfg = PriorNetConfig::new(10, 64);
    let net = PriorNet::zeros(&cfg);
    assert_eq!(net.num_params(), cfg.params_per_net());
    // 1->64, 8 x 64->64, 64->1 with 3x3 kernels
    let expect = (64 * 9 + 64) + 8 * (64 * 64 * 9 + 64) + (64 * 9 + 1);
    assert_eq!(cfg.params_per_net(), expect);
}
