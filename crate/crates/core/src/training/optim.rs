use crate::unroll::{Algorithm, NetworkGrads, UnrolledNetwork};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Which algorithm scalars are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarMask {
    pub alpha: bool,
    pub rho: bool,
    pub mu: bool,
}

impl ScalarMask {
    pub fn for_network(net: &UnrolledNetwork) -> Self {
        let learn = net.config.learn_alpha;
        let alg = net.config.algorithm;
        Self {
            alpha: learn && alg != Algorithm::PriorOnly,
            rho: learn && alg.uses_splitting(),
            mu: learn && alg == Algorithm::Ladmm,
        }
    }
}

/// Number of trainable values in the flat layout.
pub fn num_trainable(net: &UnrolledNetwork) -> usize {
    let m = ScalarMask::for_network(net);
    let n = net.iterations();
    net.priors.num_params() + n * (m.alpha as usize + m.rho as usize + m.mu as usize)
}

/// Flatten gradients: prior weights and biases layer by layer, then the
/// log-scalar gradients selected by the mask.
pub fn flatten_grads(net: &UnrolledNetwork, grads: &NetworkGrads) -> Vec<f64> {
    let m = ScalarMask::for_network(net);
    let mut out = Vec::with_capacity(num_trainable(net));
    for p in &grads.priors {
        for (w, b) in &p.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }
    if m.alpha {
        out.extend(&grads.log_alpha);
    }
    if m.rho {
        out.extend(&grads.log_rho);
    }
    if m.mu {
        out.extend(&grads.log_mu);
    }
    out
}

/// Apply an update in the flat layout: additive for prior weights,
/// multiplicative (`s *= exp(d)`) for the positive scalars.
pub fn apply_update(net: &mut UnrolledNetwork, delta: &[f64]) {
    let m = ScalarMask::for_network(net);
    let mut it = delta.iter();
    for p in &mut net.priors.nets {
        for layer in &mut p.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w += it.next().expect("delta length");
            }
        }
    }
    let s = &mut net.scalars;
    for (on, vals) in [(m.alpha, &mut s.alpha), (m.rho, &mut s.rho), (m.mu, &mut s.mu)] {
        if on {
            for v in vals.iter_mut() {
                *v *= it.next().expect("delta length").exp();
            }
        }
    }
    debug_assert!(it.next().is_none());
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Update direction for gradient `g` at learning rate `lr`.
    pub fn step(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        assert_eq!(g.len(), self.m.len(), "gradient length");
        self.t += 1;
        let b1t = 1.0 - BETA1.powi(self.t as i32);
        let b2t = 1.0 - BETA2.powi(self.t as i32);
        let mut out = Vec::with_capacity(g.len());
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = BETA1 * *m + (1.0 - BETA1) * gi;
            *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
            let mh = *m / b1t;
            let vh = *v / b2t;
            out.push(-lr * mh / (vh.sqrt() + EPS));
        }
        out
    }
}

/// Rescale `g` in place so its norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}
