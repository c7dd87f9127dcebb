use ndarray::{array, Array2};

use super::*;
use crate::datagen::{dead_leaves, DegradationSpec};
use crate::linops::{ForwardModel, Measurement};
use crate::metrics::psnr_plane;
use crate::prior::PriorNetConfig;
use crate::rng::Rng;
use crate::unroll::{Algorithm, UnrollConfig, UnrolledNetwork};

fn small_net(alg: Algorithm, n: usize, seed: u64) -> UnrolledNetwork {
    let cfg = UnrollConfig::new(alg, n, 1.0, 2.0, PriorNetConfig::new(2, 4));
    UnrolledNetwork::new(cfg, &mut Rng::new(seed)).unwrap()
}

fn denoise_batch(n: usize, size: usize, sigma: f64, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    let imgs: Vec<Array2<f64>> = (0..n).map(|_| dead_leaves(&mut rng, size, size)).collect();
    make_samples(&imgs, &DegradationSpec::denoise(sigma), seed).unwrap()
}

fn cfg(steps: usize, lr: f64) -> TrainConfig {
    let mut c = TrainConfig::new(steps);
    c.learning_rate = lr;
    c.eval_every = 5;
    c
}

/// 1x1 "deblur" with gain `a`: one zero-prior proximal step maps `y` to
/// `g(lam) y` with `g(lam) = a (1 + lam) / (1 + lam a^2)`.
fn gain_samples(a: f64, sigma: f64, pairs: &[(f64, f64)]) -> Vec<Sample> {
    let model = ForwardModel::circular_conv(array![[a]], sigma).unwrap();
    pairs
        .iter()
        .map(|&(x, y)| Sample {
            x: array![[x]],
            model: model.clone(),
            y: Measurement::Real(array![[y]]),
        })
        .collect()
}

#[test]
fn quadratic_grid_matches_closed_form() {
    let (a, sigma) = (0.5, 0.5);
    let pairs = [(0.31, 0.40), (0.62, 0.55), (0.12, 0.20), (0.80, 0.71)];
    let val = gain_samples(a, sigma, &pairs);
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let syy: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
    let g_star = sxy / syy;
    let gain = |c0: f64| {
        let lam = c0 / (sigma * sigma);
        a * (1.0 + lam) / (1.0 + lam * a * a)
    };
    let c0s = [0.1, 0.3, 0.6, 1.0, 3.0];
    // squared error is quadratic in the gain, so the closest gain wins
    let expect = c0s
        .iter()
        .copied()
        .min_by(|&p, &q| (gain(p) - g_star).abs().total_cmp(&(gain(q) - g_star).abs()))
        .unwrap();

    let mut tc = TrainConfig::new(1);
    tc.grid.c0 = c0s.to_vec();
    tc.grid.c = vec![4.0, 1.0, 2.0];
    let init = UnrolledNetwork::zero_prior(UnrollConfig::new(
        Algorithm::ProxGradient,
        1,
        1.0,
        1.0,
        PriorNetConfig::new(2, 2),
    ))
    .unwrap();
    let res = grid_search_unrolled(&init, &[], &val, &tc).unwrap();
    assert_eq!(res.c0, expect);
    // with N = 1 the decay never matters: tie goes to the smallest c
    assert_eq!(res.c, 1.0);
    assert_eq!(res.points.len(), 15);

    // the reported PSNR is the closed-form one
    let per: Vec<f64> = pairs
        .iter()
        .map(|p| psnr_plane(array![[gain(expect) * p.1]].view(), array![[p.0]].view(), false))
        .collect();
    assert!((res.psnr - per.iter().sum::<f64>() / 4.0).abs() < 1e-9);
}

#[test]
fn grid_tie_break_and_all_diverged() {
    let r = grid_search_scalars(&[10.0, 0.1, 1.0], &[4.0, 2.0], |_, _| Ok(20.0)).unwrap();
    assert_eq!((r.c0, r.c), (0.1, 2.0));

    let r = grid_search_scalars(&[1.0, 2.0], &[1.0], |c0, _| Ok(if c0 == 2.0 { f64::INFINITY } else { 30.0 }))
        .unwrap();
    assert_eq!(r.c0, 2.0);

    let err = grid_search_scalars(&[1.0, 2.0], &[3.0], |c0, _| {
        if c0 == 1.0 {
            Ok(f64::NAN)
        } else {
            Err(OdpError::Divergence("boom".into()))
        }
    })
    .unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, OdpError::Divergence(_)));
    assert!(msg.contains("c0=1") && msg.contains("c0=2"), "{msg}");

    assert!(matches!(
        grid_search_scalars(&[], &[1.0], |_, _| Ok(1.0)),
        Err(OdpError::Config(_))
    ));
    assert!(matches!(
        grid_search_scalars(&[1.0], &[1.0], |_, _| Err(OdpError::Shape("x".into()))),
        Err(OdpError::Shape(_))
    ));
}

#[test]
fn neg_psnr_loss_is_scaled_mse() {
    let mut rng = Rng::new(3);
    let x = Array2::from_shape_fn((5, 6), |_| rng.uniform());
    let out = Array2::from_shape_fn((5, 6), |(i, j)| x[(i, j)] + 0.05 * rng.normal());
    let (mse, gm) = loss_and_grad(LossKind::Mse, &out, &x);
    let (np, gp) = loss_and_grad(LossKind::NegPsnr, &out, &x);
    assert!((np + psnr_plane(out.view(), x.view(), false)).abs() < 1e-9);
    let k = 10.0 / (std::f64::consts::LN_10 * mse);
    for (a, b) in gp.iter().zip(gm.iter()) {
        assert!((a - k * b).abs() <= 1e-12 * a.abs().max(1e-12));
    }
    // finite-difference check of both gradients
    let h = 1e-6;
    for kind in [LossKind::Mse, LossKind::NegPsnr] {
        let (_, g) = loss_and_grad(kind, &out, &x);
        for idx in [(0, 0), (2, 3), (4, 5)] {
            let mut p = out.clone();
            p[idx] += h;
            let mut m = out.clone();
            m[idx] -= h;
            let fd = (loss_and_grad(kind, &p, &x).0 - loss_and_grad(kind, &m, &x).0) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "{kind:?} {fd} {}", g[idx]);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_network_unchanged() {
    let mut net = small_net(Algorithm::Admm, 2, 1);
    net.config.learn_alpha = true;
    let before = net.clone();
    let mut src = FixedSource::new(vec![denoise_batch(2, 8, 25.0, 4)]).unwrap();
    train(&mut net, &mut src, &[], &cfg(6, 0.0), &TrainOptions::default()).unwrap();
    assert_eq!(net, before);
    assert!(cfg(6, 0.0).validate().is_err());
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut net = small_net(Algorithm::ProxGradient, 2, 9);
        let stream = PatchStream::new(
            (0..3).map(|i| dead_leaves(&mut Rng::new(i), 20, 20)).collect(),
            8,
            2,
            true,
            Rng::new(5),
        )
        .unwrap();
        let mut src = SyntheticSource {
            stream,
            specs: vec![DegradationSpec::denoise(15.0), DegradationSpec::denoise(30.0)],
            rng: Rng::new(6),
        };
        let val = denoise_batch(2, 8, 25.0, 77);
        let rep = train(&mut net, &mut src, &val, &cfg(10, 1e-3), &TrainOptions::default()).unwrap();
        (net, rep.curve)
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(ca.iter().map(|p| p.step).collect::<Vec<_>>(), vec![5, 10]);
}

#[test]
fn overfits_a_fixed_batch() {
    let mut net = small_net(Algorithm::ProxGradient, 2, 2);
    net.config.learn_alpha = true;
    let batch = denoise_batch(4, 12, 50.0, 8);
    let (l0, _) = batch_loss_and_grads(&net, &batch, LossKind::Mse).unwrap();
    let mut src = FixedSource::new(vec![batch.clone()]).unwrap();
    let mut c = cfg(150, 1e-2);
    c.eval_every = 50;
    train(&mut net, &mut src, &batch, &c, &TrainOptions::default()).unwrap();
    let (l1, _) = batch_loss_and_grads(&net, &batch, LossKind::Mse).unwrap();
    assert!(l1 < 0.5 * l0, "loss {l0} -> {l1}");
    assert!(net.scalars.all_positive());
}

#[test]
fn scalars_stay_positive_under_aggressive_updates() {
    let mut net = small_net(Algorithm::Ladmm, 3, 4);
    net.config.learn_alpha = true;
    let mut src = FixedSource::new(vec![denoise_batch(2, 8, 25.0, 1)]).unwrap();
    let mut c = cfg(20, 0.5);
    c.grad_clip = 0.0;
    let _ = train(&mut net, &mut src, &[], &c, &TrainOptions::default());
    assert!(net.scalars.all_positive());
}

#[test]
fn divergence_saves_last_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = denoise_batch(1, 8, 25.0, 2);
    bad[0].x[(0, 0)] = f64::NAN;
    let good = denoise_batch(1, 8, 25.0, 3);
    let mut src = FixedSource::new(vec![good.clone(), good, bad]).unwrap();
    let mut net = small_net(Algorithm::ProxGradient, 2, 5);
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..TrainOptions::default()
    };
    let mut c = cfg(10, 1e-3);
    c.eval_every = 1;
    let err = train(&mut net, &mut src, &[], &c, &opts).unwrap_err();
    assert!(matches!(err, OdpError::Divergence(_)), "{err}");
    let ck = Checkpoint::load(&dir.path().join("checkpoint_last.odp")).unwrap();
    assert_eq!(ck.step, 2);
    assert_eq!(ck.network, net);
    assert_eq!(read_curves(&dir.path().join("curves.csv")).unwrap().len(), 2);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let mut net = small_net(Algorithm::Ladmm, 3, 11);
    net.scalars.mu[1] = 0.37;
    let mut adam = Adam::new(num_trainable(&net));
    adam.step(&vec![0.3; adam.m.len()], 1e-3);
    let ck = Checkpoint {
        network: net,
        optimizer: Some(adam),
        step: 42,
        best_val_psnr: Some(31.5),
        config: serde_json::json!({"name": "x"}),
    };
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a/b/ck.odp");
    ck.save(&p).unwrap();
    assert_eq!(Checkpoint::load(&p).unwrap(), ck);

    let mut other = ck.network.config.clone();
    other.prior.channels += 1;
    assert!(matches!(back.check_compatible(&other), Err(OdpError::Compatibility(_))));
    assert!(back.check_compatible(&ck.network.config).is_ok());
    assert!(matches!(Checkpoint::from_bytes(b"garbage!garbage!"), Err(OdpError::Format(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]), Err(OdpError::Format(_))));
}

#[test]
fn evaluate_identity_and_mean() {
    let imgs: Vec<Array2<f64>> = (0..3).map(|i| dead_leaves(&mut Rng::new(i), 8, 8)).collect();
    let clean = make_samples(&imgs, &DegradationSpec::denoise(0.0), 0).unwrap();
    let net = small_net(Algorithm::ProxGradient, 2, 0);
    let ids: Vec<String> = (0..3).map(|i| format!("img{i}")).collect();
    let (rep, recon) = evaluate(&net, &clean, &ids, "pg", false).unwrap();
    assert!(rep.rows.iter().all(|r| r.psnr_db == f64::INFINITY));
    assert_eq!(rep.mean_psnr, f64::INFINITY);
    assert_eq!(recon[1], imgs[1]);

    let noisy = make_samples(&imgs, &DegradationSpec::denoise(25.0), 0).unwrap();
    let (rep2, _) = evaluate(&net, &noisy, &ids, "pg", true).unwrap();
    let avg = rep2.rows.iter().map(|r| r.psnr_db).sum::<f64>() / 3.0;
    assert!((rep2.mean_psnr - avg).abs() < 1e-12);
    assert!(rep2.max_constraint_residual.is_none());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("eval.csv");
    write_eval_csv(&[rep, rep2.clone()], &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image_id,method,psnr_db");
    assert_eq!(lines[1], "img0,pg,inf");
    assert_eq!(lines[4], "mean,pg,inf");
    assert_eq!(lines[8], format!("mean,pg,{}", format_db(rep2.mean_psnr)));

    assert!(matches!(evaluate(&net, &noisy, &ids[..2], "pg", false), Err(OdpError::Shape(_))));
}

#[test]
fn samples_follow_fixed_protocol() {
    let imgs: Vec<Array2<f64>> = (0..4).map(|i| dead_leaves(&mut Rng::new(i), 8, 8)).collect();
    let spec = DegradationSpec::denoise(25.0);
    let a = make_samples(&imgs, &spec, 9).unwrap();
    let c = make_samples(&imgs, &spec, 10).unwrap();
    let real = |s: &Sample| match &s.y {
        Measurement::Real(r) => r.clone(),
        Measurement::Complex(_) => unreachable!(),
    };
    for (i, s) in a.iter().enumerate() {
        let one = make_sample(&imgs[i], &spec, &mut Rng::new(9).child(i as u64)).unwrap();
        assert_eq!(real(s), real(&one));
    }
    assert_ne!(real(&a[0]), real(&c[0]));
}

#[test]
fn config_parsing_and_schedule() {
    let c: TrainConfig = toml::from_str("steps = 100\nlearning_rate = 0.01\ndecay_every = 10\n").unwrap();
    assert_eq!(c.batch, 16);
    assert_eq!(c.grad_clip, 10.0);
    assert_eq!(c.grid.c0, vec![0.1, 1.0, 10.0]);
    assert!((c.learning_rate_at(25) - 0.0025).abs() < 1e-15);
    assert!(c.validate().is_ok());
    assert!(toml::from_str::<TrainConfig>("steps = 1\nlearnin_rate = 0.1\n").is_err());
    let mut bad = c.clone();
    bad.grid.c = vec![0.0];
    assert!(bad.validate().is_err());
}

#[test]
fn curves_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    let curve = vec![
        CurvePoint {
            step: 5,
            loss: 1.25e-3,
            val_psnr: 28.5,
        },
        CurvePoint {
            step: 10,
            loss: 1e-4,
            val_psnr: f64::INFINITY,
        },
    ];
    write_curves(&curve, &p).unwrap();
    assert_eq!(read_curves(&p).unwrap(), curve);
}
