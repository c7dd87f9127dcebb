use ndarray::Array2;
use num_complex::Complex64;

use super::*;
use crate::fft::{fft2_plane, ifft2_plane};
use crate::linops::forward_plane;
use crate::prior::{Activation, PriorNet};

fn rand_plane(rng: &mut Rng, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.uniform())
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_mask(rng: &mut Rng, h: usize, w: usize, frac: f64) -> Array2<f64> {
    // conjugate-symmetric so real images can satisfy the constraint
    let mut m: Array2<f64> = Array2::from_shape_fn((h, w), |_| if rng.uniform() < frac { 1.0 } else { 0.0 });
    for i in 0..h {
        for j in 0..w {
            let mirror = m[((h - i) % h, (w - j) % w)];
            m[(i, j)] = m[(i, j)].max(mirror);
        }
    }
    m[(0, 0)] = 1.0;
    m
}

fn blur_kernel() -> Array2<f64> {
    let k = Array2::from_shape_vec((3, 3), vec![0.05, 0.1, 0.05, 0.1, 0.4, 0.1, 0.05, 0.1, 0.05]).unwrap();
    &k / k.sum()
}

fn term_for(model: &ForwardModel, x: &Array2<f64>, rng: &mut Rng) -> DataTerm {
    let mut m = forward_plane(model, x.view()).unwrap();
    if let Measurement::Real(r) = &mut m {
        let s = model.noise_sigma();
        r.mapv_inplace(|v| v + s * rng.normal());
    }
    DataTerm::new(model, m).unwrap()
}

fn config(alg: Algorithm, n: usize, c0: f64, c: f64, depth: usize, ch: usize) -> UnrollConfig {
    UnrollConfig::new(alg, n, c0, c, PriorNetConfig::new(depth, ch))
}

/// Scalar networks on a 1x1 image: `f(w) = w1 * relu(w0 * w + b0) + b1`.
fn scalar_net(alg: Algorithm, params: &[[f64; 4]], alpha: &[f64]) -> UnrolledNetwork {
    let prior = PriorNetConfig {
        kernel_size: 1,
        ..PriorNetConfig::new(2, 1)
    };
    let mut cfg = UnrollConfig::new(alg, params.len(), 1.0, 1.0, prior);
    cfg.rho_init = 1.0;
    let mut net = UnrolledNetwork::zero_prior(cfg).unwrap();
    for (k, p) in params.iter().enumerate() {
        let layers = &mut net.priors.nets[k].layers;
        layers[0].weight[(0, 0)] = p[0];
        layers[0].bias[0] = p[1];
        layers[1].weight[(0, 0)] = p[2];
        layers[1].bias[0] = p[3];
    }
    net.scalars.alpha = alpha.to_vec();
    net
}

fn scalar_f(p: &[f64; 4], w: f64) -> f64 {
    p[2] * (p[0] * w + p[1]).max(0.0) + p[3]
}

fn pixel(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

#[test]
fn alpha_schedule_is_exact_and_decreasing() {
    let cfg = config(Algorithm::ProxGradient, 5, 0.5, 2.0, 2, 1);
    assert_eq!(cfg.alpha_schedule(), vec![0.5, 0.25, 0.125, 0.0625, 0.03125]);
    let cfg = config(Algorithm::ProxGradient, 6, 3.7, 1.3, 2, 1);
    let a = UnrolledNetwork::new(cfg, &mut Rng::new(0)).unwrap();
    for k in 0..6 {
        let (c0, c) = std::hint::black_box((3.7f64, 1.3f64));
        assert_eq!(a.alphas()[k], c0 * c.powi(-(k as i32)));
        if k > 0 {
            assert!(a.alphas()[k] < a.alphas()[k - 1]);
        }
    }
}

#[test]
fn invalid_unroll_configs() {
    assert!(config(Algorithm::Admm, 0, 1.0, 1.0, 2, 1).validate().is_err());
    assert!(config(Algorithm::Admm, 2, 0.0, 1.0, 2, 1).validate().is_err());
    assert!(config(Algorithm::Admm, 2, 1.0, -1.0, 2, 1).validate().is_err());
    assert!(config(Algorithm::Admm, 2, 1.0, 1.0, 1, 1).validate().is_err());
}

#[test]
fn init_state_backprojection() {
    let mut rng = Rng::new(1);
    let y = rand_plane(&mut rng, 6, 7);
    let id = DataTerm::new(&ForwardModel::identity(0.1).unwrap(), Measurement::Real(y.clone())).unwrap();
    let s = init_state(&id, Algorithm::Admm);
    assert_eq!(s.x, y);
    assert_eq!(s.z.as_ref(), Some(&y));
    assert!(s.u.unwrap().iter().all(|&v| v == 0.0));
    assert!(init_state(&id, Algorithm::ProxGradient).z.is_none());

    // full mask: x0 = F^-1 y recovers the image
    let x = rand_plane(&mut rng, 8, 8);
    let mri = ForwardModel::masked_fourier(Array2::ones((8, 8))).unwrap();
    let t = DataTerm::new(&mri, forward_plane(&mri, x.view()).unwrap()).unwrap();
    assert!(max_abs_diff(&init_state(&t, Algorithm::ProxGradient).x, &x) < 1e-12);

    // blur: correlation of y with the kernel
    let k = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 + 1.0);
    let model = ForwardModel::circular_conv(k.clone(), 0.01).unwrap();
    let t = DataTerm::new(&model, Measurement::Real(y.clone())).unwrap();
    let (h, w) = y.dim();
    let mut oracle = Array2::zeros((h, w));
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut acc = 0.0;
            for a in 0..3isize {
                for b in 0..5isize {
                    let r = (i + (a - 1)).rem_euclid(h as isize) as usize;
                    let c = (j + (b - 2)).rem_euclid(w as isize) as usize;
                    acc += k[(a as usize, b as usize)] * y[(r, c)];
                }
            }
            oracle[(i as usize, j as usize)] = acc;
        }
    }
    assert!(max_abs_diff(&init_state(&t, Algorithm::ProxGradient).x, &oracle) < 1e-10);
}

#[test]
fn prox_gradient_limits() {
    let mut rng = Rng::new(2);
    let y = rand_plane(&mut rng, 5, 5);
    let cfg = config(Algorithm::ProxGradient, 1, 1.0, 1.0, 2, 2);
    let net = UnrolledNetwork::zero_prior(cfg).unwrap();
    // sigma = 0: the data step returns y exactly
    let t = DataTerm::new(&ForwardModel::identity(0.0).unwrap(), Measurement::Real(y.clone())).unwrap();
    assert_eq!(net.reconstruct(&t, 0.0).unwrap(), y);
    // alpha = 0: the data step is the identity, output is x0
    let model = ForwardModel::circular_conv(blur_kernel(), 0.05).unwrap();
    let t = DataTerm::new(&model, Measurement::Real(y.clone())).unwrap();
    let mut net0 = net.clone();
    net0.scalars.alpha = vec![0.0];
    let x0 = t.backprojection();
    assert!(max_abs_diff(&net0.reconstruct(&t, 0.05).unwrap(), &x0) < 1e-14);
}

#[test]
fn zero_prior_prox_gradient_matches_composed_closed_forms() {
    let mut rng = Rng::new(3);
    let (h, w) = (8, 6);
    let x = rand_plane(&mut rng, h, w);
    let sigma = 0.05;
    let model = ForwardModel::circular_conv(blur_kernel(), sigma).unwrap();
    let t = term_for(&model, &x, &mut rng);
    let cfg = config(Algorithm::ProxGradient, 4, 0.01, 2.0, 3, 2);
    let net = UnrolledNetwork::zero_prior(cfg.clone()).unwrap();
    let out = net.reconstruct(&t, sigma).unwrap();

    let Measurement::Real(y) = t.measurement() else { unreachable!() };
    let mut kpad = Array2::<f64>::zeros((h, w));
    let k = blur_kernel();
    for a in 0..3 {
        for b in 0..3 {
            kpad[((a + h - 1) % h, (b + w - 1) % w)] = k[(a, b)];
        }
    }
    let kh = fft2_plane(kpad.view());
    let yh = fft2_plane(y.view());
    let mut xh: Array2<Complex64> = Array2::from_shape_fn((h, w), |ij| kh[ij].conj() * yh[ij]);
    for alpha in cfg.alpha_schedule() {
        let lam = alpha / (sigma * sigma);
        for ij in ndarray::indices((h, w)) {
            let num = kh[ij].conj() * yh[ij] * lam + xh[ij];
            xh[ij] = num / (lam * kh[ij].norm_sqr() + 1.0);
        }
    }
    let oracle = ifft2_plane(&xh).mapv(|v| v.re);
    assert!(max_abs_diff(&out, &oracle) < 1e-12);
}

#[test]
fn constraint_algorithms_stay_feasible_on_mri() {
    let mut rng = Rng::new(4);
    let x = rand_plane(&mut rng, 8, 8);
    let model = ForwardModel::masked_fourier(random_mask(&mut rng, 8, 8, 0.3)).unwrap();
    let t = term_for(&model, &x, &mut rng);
    let Measurement::Complex(y) = t.measurement().clone() else { unreachable!() };
    for alg in [Algorithm::ProxGradient, Algorithm::Admm, Algorithm::Ladmm] {
        let net = UnrolledNetwork::new(config(alg, 3, 1.0, 2.0, 3, 4), &mut Rng::new(9)).unwrap();
        let out = net.reconstruct(&t, 0.0).unwrap();
        let Measurement::Complex(ax) = forward_plane(&model, out.view()).unwrap() else { unreachable!() };
        let err = ax.iter().zip(y.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{alg}: {err}");
    }
    let gd = UnrolledNetwork::zero_prior(config(Algorithm::GradientDescent, 2, 1.0, 1.0, 2, 1)).unwrap();
    assert!(matches!(gd.reconstruct(&t, 0.0), Err(OdpError::Unsupported(_))));
    let yt = ImageTensor::from_complex_plane(y, Domain::Fourier);
    assert!(matches!(
        run_gradient_descent(&model, &yt, &gd),
        Err(OdpError::Unsupported(_))
    ));
}

#[test]
fn admm_scalar_hand_oracle() {
    let params = [[0.8, -0.1, 0.5, 0.05], [1.2, 0.2, -0.3, 0.0]];
    let alpha = [0.03, 0.01];
    let mut net = scalar_net(Algorithm::Admm, &params, &alpha);
    net.scalars.rho = vec![1.5, 0.7];
    let (y, sigma) = (0.6, 0.1);
    let t = DataTerm::new(&ForwardModel::identity(sigma).unwrap(), Measurement::Real(pixel(y))).unwrap();
    let out = net.reconstruct(&t, sigma).unwrap()[(0, 0)];

    let (mut z, mut u) = (y, 0.0);
    for k in 0..2 {
        let w = z - u;
        let x = w + scalar_f(&params[k], w);
        let v = x + u;
        let lam = alpha[k] / (net.scalars.rho[k] * sigma * sigma);
        z = (lam * y + v) / (1.0 + lam);
        u += x - z;
    }
    assert!((out - z).abs() < 1e-14);
}

#[test]
fn admm_dual_stays_zero_at_consensus() {
    let mut rng = Rng::new(5);
    let y = rand_plane(&mut rng, 5, 5);
    let t = DataTerm::new(&ForwardModel::identity(0.0).unwrap(), Measurement::Real(y.clone())).unwrap();
    let net = UnrolledNetwork::zero_prior(config(Algorithm::Admm, 3, 1.0, 1.0, 2, 2)).unwrap();
    let (out, tape) = net.forward_tape(&t, 0.0, true).unwrap();
    assert_eq!(out, y);
    assert_eq!(tape.len(), 3);
    // x = z = y at every step, so u never moves
    let s = init_state(&t, Algorithm::Admm);
    assert_eq!(s.x, y);
}

#[test]
fn ladmm_unit_step_equals_admm_on_identity() {
    let mut rng = Rng::new(6);
    for trial in 0..5 {
        let x = rand_plane(&mut rng, 6, 6);
        let sigma = 0.05 + 0.05 * rng.uniform();
        let model = ForwardModel::identity(sigma).unwrap();
        let t = term_for(&model, &x, &mut rng);
        let cfg = config(Algorithm::Admm, 3, 0.004, 1.5, 3, 3);
        let admm = UnrolledNetwork::new(cfg, &mut Rng::new(100 + trial)).unwrap();
        let ladmm = admm.with_algorithm(Algorithm::Ladmm);
        let a = admm.reconstruct(&t, sigma).unwrap();
        let b = ladmm.reconstruct(&t, sigma).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }
}

#[test]
fn ladmm_scalar_hand_oracle() {
    let params = [[1.0, 0.0, 0.4, -0.02]];
    let alpha = [0.02];
    let mut net = scalar_net(Algorithm::Ladmm, &params, &alpha);
    net.scalars.mu = vec![0.6];
    net.scalars.rho = vec![2.0];
    // 1x1 blur with gain 0.5: A = 0.5, L = 0.25
    let model = ForwardModel::circular_conv(pixel(0.5), 0.1).unwrap();
    let y = 0.3;
    let t = DataTerm::new(&model, Measurement::Real(pixel(y))).unwrap();
    let out = net.reconstruct(&t, 0.1).unwrap()[(0, 0)];

    let z0 = 0.5 * y;
    let x = z0 + scalar_f(&params[0], z0);
    let lam = 0.02 / (2.0 * 0.01);
    let c = 0.6 * lam / (1.0 + lam * 0.25);
    let z = x - c * 0.5 * (0.5 * x - y);
    assert!((out - z).abs() < 1e-14);
}

#[test]
fn ladmm_never_calls_the_inverse_solver() {
    let mut rng = Rng::new(7);
    let x = rand_plane(&mut rng, 8, 8);
    let net = UnrolledNetwork::new(config(Algorithm::Ladmm, 4, 0.01, 2.0, 2, 2), &mut Rng::new(1)).unwrap();
    for model in [
        ForwardModel::circular_conv(blur_kernel(), 0.02).unwrap(),
        ForwardModel::masked_fourier(random_mask(&mut rng, 8, 8, 0.4)).unwrap(),
    ] {
        let t = term_for(&model, &x, &mut rng);
        let (out, tape) = net.forward_tape(&t, model.noise_sigma(), true).unwrap();
        net.backward(&tape, &t, out.view()).unwrap();
        let c = t.counts();
        assert_eq!(c.solve, 0);
        assert!(c.forward > 0 && c.adjoint > 0);
    }
    // ADMM on the same problem does use it
    let admm = net.with_algorithm(Algorithm::Admm);
    let model = ForwardModel::circular_conv(blur_kernel(), 0.02).unwrap();
    let t = term_for(&model, &x, &mut rng);
    admm.reconstruct(&t, 0.02).unwrap();
    assert_eq!(t.counts().solve, 4);
}

#[test]
fn gradient_descent_contracts_toward_y() {
    let mut rng = Rng::new(8);
    let y = rand_plane(&mut rng, 4, 4);
    let sigma = 0.1;
    let t = DataTerm::new(&ForwardModel::identity(sigma).unwrap(), Measurement::Real(y.clone())).unwrap();
    for step in [0.3, 1.0, 1.7] {
        let n = 6;
        let mut net = UnrolledNetwork::zero_prior(config(Algorithm::GradientDescent, n, 1.0, 1.0, 2, 1)).unwrap();
        net.scalars.alpha = vec![step * sigma * sigma; n];
        // a constant offset in the first prior step moves the iterate off y
        let offset = 0.25;
        net.priors.nets[0].layers[1].bias[0] = offset;
        let out = net.reconstruct(&t, sigma).unwrap();
        let expect = offset * (1.0 - step).powi(n as i32 - 1);
        for (o, yv) in out.iter().zip(y.iter()) {
            assert!((o - yv - expect).abs() < 1e-12);
        }
    }
    // alpha = 0 and zero prior: output x0
    let mut net = UnrolledNetwork::zero_prior(config(Algorithm::GradientDescent, 3, 1.0, 1.0, 2, 1)).unwrap();
    net.scalars.alpha = vec![0.0; 3];
    let model = ForwardModel::circular_conv(blur_kernel(), sigma).unwrap();
    let t = DataTerm::new(&model, Measurement::Real(y.clone())).unwrap();
    assert_eq!(net.reconstruct(&t, sigma).unwrap(), t.backprojection());
}

#[test]
fn gradient_descent_scalar_hand_recursion() {
    let params = [[0.9, 0.1, 0.3, -0.05], [-0.7, 0.4, 0.6, 0.02], [1.1, -0.2, -0.4, 0.01]];
    let alpha = [0.004, 0.002, 0.001];
    let net = scalar_net(Algorithm::GradientDescent, &params, &alpha);
    let (a, y, sigma) = (0.8, 0.45, 0.1);
    let model = ForwardModel::circular_conv(pixel(a), sigma).unwrap();
    let t = DataTerm::new(&model, Measurement::Real(pixel(y))).unwrap();
    let out = net.reconstruct(&t, sigma).unwrap()[(0, 0)];
    let mut x = a * y;
    for k in 0..3 {
        let t = alpha[k] / (sigma * sigma);
        x = x + scalar_f(&params[k], x) - t * a * (a * x - y);
    }
    assert!((out - x).abs() < 1e-14);
}

#[test]
fn prior_only_composes_residual_steps() {
    let mut rng = Rng::new(9);
    let y = rand_plane(&mut rng, 6, 5);
    let model = ForwardModel::identity(0.1).unwrap();
    let t = DataTerm::new(&model, Measurement::Real(y.clone())).unwrap();

    let zero = UnrolledNetwork::zero_prior(config(Algorithm::PriorOnly, 3, 1.0, 1.0, 3, 2)).unwrap();
    assert_eq!(zero.reconstruct(&t, 0.1).unwrap(), y);

    let net = UnrolledNetwork::new(config(Algorithm::PriorOnly, 3, 1.0, 1.0, 3, 2), &mut Rng::new(4)).unwrap();
    let out = net.reconstruct(&t, 0.1).unwrap();
    let mut x = y.clone();
    for k in 0..3 {
        x = &x + &net.priors.nets[k].forward(x.view()).unwrap();
    }
    assert!(max_abs_diff(&out, &x) < 1e-14);

    // prox-gradient with an identity data step (alpha = 0) is the same network
    let mut pg = net.with_algorithm(Algorithm::ProxGradient);
    pg.scalars.alpha = vec![0.0; 3];
    assert!(max_abs_diff(&pg.reconstruct(&t, 0.1).unwrap(), &out) < 1e-14);
    assert_eq!(pg.prior_param_count(), net.prior_param_count());
}

#[test]
fn tensor_runners_check_algorithm_and_batch() {
    let mut rng = Rng::new(10);
    let planes = vec![rand_plane(&mut rng, 5, 5), rand_plane(&mut rng, 5, 5)];
    let y = ImageTensor::from_planes(&planes).unwrap();
    let model = ForwardModel::identity(0.1).unwrap();
    let net = UnrolledNetwork::new(config(Algorithm::ProxGradient, 2, 0.01, 2.0, 2, 2), &mut rng).unwrap();
    let out = run_prox_gradient(&model, &y, &net).unwrap();
    assert_eq!(out.shape(), (2, 1, 5, 5));
    let t = DataTerm::new(&model, Measurement::Real(planes[1].clone())).unwrap();
    assert_eq!(out.plane(1, 0).unwrap().to_owned(), net.reconstruct(&t, 0.1).unwrap());
    assert!(matches!(run_admm(&model, &y, &net), Err(OdpError::Config(_))));
    assert!(run_prior_only(&model, &y, &net.with_algorithm(Algorithm::PriorOnly)).is_ok());
    assert!(run_ladmm(&model, &y, &net.with_algorithm(Algorithm::Ladmm)).is_ok());
}

fn loss(net: &UnrolledNetwork, t: &DataTerm, sigma: f64, target: &Array2<f64>) -> f64 {
    let out = net.reconstruct(t, sigma).unwrap();
    0.5 * out.iter().zip(target.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

fn check_close(analytic: f64, numeric: f64, floor: f64, what: &str) {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    assert!(
        (analytic - numeric).abs() / scale < 1e-3,
        "{what}: analytic {analytic} numeric {numeric}"
    );
}

fn fd_check(net: &UnrolledNetwork, t: &DataTerm, sigma: f64, target: &Array2<f64>) {
    let (out, tape) = net.forward_tape(t, sigma, true).unwrap();
    let grads = net.backward(&tape, t, (&out - target).view()).unwrap();
    let floor = 1e-6 * grads.norm().max(1e-3);
    let h = 1e-6;
    for (ni, pnet) in net.priors.nets.iter().enumerate() {
        for (li, layer) in pnet.layers.iter().enumerate() {
            for idx in 0..layer.weight.len() {
                let ij = (idx / layer.weight.ncols(), idx % layer.weight.ncols());
                let mut p = net.clone();
                p.priors.nets[ni].layers[li].weight[ij] += h;
                let mut m = net.clone();
                m.priors.nets[ni].layers[li].weight[ij] -= h;
                let fd = (loss(&p, t, sigma, target) - loss(&m, t, sigma, target)) / (2.0 * h);
                check_close(grads.priors[ni].layers[li].0[ij], fd, floor, "weight");
            }
            for o in 0..layer.bias.len() {
                let mut p = net.clone();
                p.priors.nets[ni].layers[li].bias[o] += h;
                let mut m = net.clone();
                m.priors.nets[ni].layers[li].bias[o] -= h;
                let fd = (loss(&p, t, sigma, target) - loss(&m, t, sigma, target)) / (2.0 * h);
                check_close(grads.priors[ni].layers[li].1[o], fd, floor, "bias");
            }
        }
    }
    type Pick = fn(&mut AlgorithmScalars) -> &mut Vec<f64>;
    let scalars: [(&str, Pick, &Vec<f64>); 3] = [
        ("alpha", |s| &mut s.alpha, &grads.log_alpha),
        ("rho", |s| &mut s.rho, &grads.log_rho),
        ("mu", |s| &mut s.mu, &grads.log_mu),
    ];
    for (name, pick, g) in scalars {
        for k in 0..net.iterations() {
            let mut p = net.clone();
            pick(&mut p.scalars)[k] *= h.exp();
            let mut m = net.clone();
            pick(&mut m.scalars)[k] *= (-h).exp();
            let fd = (loss(&p, t, sigma, target) - loss(&m, t, sigma, target)) / (2.0 * h);
            check_close(g[k], fd, floor, name);
        }
    }
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut rng = Rng::new(11);
    let (h, w) = (6, 6);
    let target = rand_plane(&mut rng, h, w);
    let sigma = 0.05;
    let models = [
        ForwardModel::identity(sigma).unwrap(),
        ForwardModel::circular_conv(blur_kernel(), sigma).unwrap(),
        ForwardModel::masked_fourier(random_mask(&mut rng, h, w, 0.4)).unwrap(),
    ];
    for model in &models {
        let t = term_for(model, &target, &mut rng);
        let s = model.noise_sigma();
        for alg in Algorithm::ALL {
            if !alg.supports(model) {
                continue;
            }
            for act in [Activation::Relu, Activation::Tanh] {
                let mut cfg = config(alg, 2, 0.004, 2.0, 2, 2);
                cfg.learn_alpha = true;
                cfg.rho_init = 0.8;
                cfg.prior.activation = act;
                let mut net = UnrolledNetwork::new(cfg, &mut rng.child(alg as u64)).unwrap();
                net.scalars.mu = vec![0.9, 0.7];
                fd_check(&net, &t, s, &target);
            }
        }
    }
}

#[test]
fn shared_prior_gradients_accumulate() {
    let mut rng = Rng::new(12);
    let target = rand_plane(&mut rng, 6, 6);
    let model = ForwardModel::circular_conv(blur_kernel(), 0.05).unwrap();
    let t = term_for(&model, &target, &mut rng);
    let mut cfg = config(Algorithm::ProxGradient, 3, 0.004, 2.0, 2, 2);
    cfg.prior.share_across_iterations = true;
    cfg.prior.activation = Activation::Tanh;
    let net = UnrolledNetwork::new(cfg, &mut rng).unwrap();
    assert_eq!(net.priors.nets.len(), 1);
    fd_check(&net, &t, 0.05, &target);
}

#[test]
fn backward_requires_a_recorded_tape() {
    let y = Array2::from_elem((4, 4), 0.5);
    let t = DataTerm::new(&ForwardModel::identity(0.1).unwrap(), Measurement::Real(y.clone())).unwrap();
    let net = UnrolledNetwork::zero_prior(config(Algorithm::ProxGradient, 2, 0.01, 1.0, 2, 1)).unwrap();
    let (_, tape) = net.forward_tape(&t, 0.1, false).unwrap();
    assert!(tape.is_empty());
    assert!(net.backward(&tape, &t, y.view()).is_err());
}

#[test]
fn prior_only_parameter_count_matches_prox_gradient() {
    let cfg = config(Algorithm::ProxGradient, 4, 1.0, 1.0, 10, 8);
    let pg = UnrolledNetwork::zero_prior(cfg.clone()).unwrap();
    let po = UnrolledNetwork::zero_prior(UnrollConfig {
        algorithm: Algorithm::PriorOnly,
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(pg.prior_param_count(), po.prior_param_count());
    assert_eq!(pg.prior_param_count(), 4 * cfg.prior.params_per_net());
    let _ = PriorNet::zeros(&cfg.prior);
}
