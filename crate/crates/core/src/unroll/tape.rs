use ndarray::{Array2, ArrayView2};

use super::{Algorithm, UnrolledNetwork};
use crate::error::{OdpError, Result};
use crate::linops::{dot, DataTerm};
use crate::prior::{PriorCache, PriorGrads};

enum Step {
    ProxGrad {
        cache: PriorCache,
        x_out: Array2<f64>,
        lam: f64,
    },
    Admm {
        cache: PriorCache,
        z_out: Array2<f64>,
        lam: f64,
    },
    Ladmm {
        cache: PriorCache,
        /// `A^H (A v - y)` at the linearization point.
        resid: Array2<f64>,
        c: f64,
        lam: f64,
    },
    Gd {
        cache: PriorCache,
        resid: Array2<f64>,
        t: f64,
    },
    PriorOnly {
        cache: PriorCache,
    },
}

/// Forward record of one reconstruction.
pub struct Tape {
    steps: Vec<Step>,
    lipschitz: f64,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Gradients of a loss with respect to every trainable quantity. Scalar
/// gradients are taken with respect to the logarithm of each scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub priors: Vec<PriorGrads>,
    pub log_alpha: Vec<f64>,
    pub log_rho: Vec<f64>,
    pub log_mu: Vec<f64>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &UnrolledNetwork) -> Self {
        let n = net.iterations();
        Self {
            priors: net.priors.nets.iter().map(PriorGrads::zeros_like).collect(),
            log_alpha: vec![0.0; n],
            log_rho: vec![0.0; n],
            log_mu: vec![0.0; n],
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) {
        for (a, b) in self.priors.iter_mut().zip(&other.priors) {
            a.add_assign(b);
        }
        for (a, b) in [
            (&mut self.log_alpha, &other.log_alpha),
            (&mut self.log_rho, &other.log_rho),
            (&mut self.log_mu, &other.log_mu),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for p in &mut self.priors {
            for (w, b) in &mut p.layers {
                *w *= s;
                *b *= s;
            }
        }
        for v in self
            .log_alpha
            .iter_mut()
            .chain(self.log_rho.iter_mut())
            .chain(self.log_mu.iter_mut())
        {
            *v *= s;
        }
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for p in &self.priors {
            for (w, b) in &p.layers {
                acc += w.iter().map(|v| v * v).sum::<f64>() + b.iter().map(|v| v * v).sum::<f64>();
            }
        }
        for v in self.log_alpha.iter().chain(&self.log_rho).chain(&self.log_mu) {
            acc += v * v;
        }
        acc.sqrt()
    }
}

fn data_weight(alpha: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        f64::INFINITY
    } else {
        alpha / (sigma * sigma)
    }
}

/// Step size of the linearized z-update.
fn ladmm_step(term: &DataTerm, mu: f64, lam: f64, lipschitz: f64) -> f64 {
    if term.is_constraint() {
        // exact projection for a partial orthonormal operator
        1.0 / lipschitz
    } else if lam.is_infinite() {
        mu / lipschitz
    } else {
        mu * lam / (1.0 + lam * lipschitz)
    }
}

pub(super) fn forward(
    net: &UnrolledNetwork,
    term: &DataTerm,
    sigma: f64,
    record: bool,
) -> Result<(Array2<f64>, Tape)> {
    let alg = net.config.algorithm;
    let n = net.iterations();
    let s = &net.scalars;
    let lipschitz = if alg == Algorithm::Ladmm { term.lipschitz() } else { 1.0 };
    if alg == Algorithm::Ladmm && lipschitz <= 0.0 {
        return Err(OdpError::Config("operator has zero norm".into()));
    }
    let mut steps = Vec::with_capacity(if record { n } else { 0 });
    let mut x = term.backprojection();
    let mut z = x.clone();
    let mut u = Array2::<f64>::zeros(x.dim());

    for k in 0..n {
        let cnn = net.priors.net(k);
        match alg {
            Algorithm::ProxGradient => {
                let (r, cache) = cnn.forward_cached(x.view())?;
                let v = &x + &r;
                let lam = data_weight(s.alpha[k], sigma);
                x = term.solve(v.view(), lam)?;
                if record {
                    steps.push(Step::ProxGrad {
                        cache,
                        x_out: x.clone(),
                        lam,
                    });
                }
            }
            Algorithm::Admm | Algorithm::Ladmm => {
                let w = &z - &u;
                let (r, cache) = cnn.forward_cached(w.view())?;
                x = &w + &r;
                let v = &x + &u;
                let lam = data_weight(s.alpha[k] / s.rho[k], sigma);
                if alg == Algorithm::Admm {
                    z = term.solve(v.view(), lam)?;
                    u = &v - &z;
                    if record {
                        steps.push(Step::Admm {
                            cache,
                            z_out: z.clone(),
                            lam,
                        });
                    }
                } else {
                    let c = ladmm_step(term, s.mu[k], lam, lipschitz);
                    let resid = term.residual_grad(v.view());
                    z = &v - &(c * &resid);
                    u = &v - &z;
                    if record {
                        steps.push(Step::Ladmm { cache, resid, c, lam });
                    }
                }
            }
            Algorithm::GradientDescent => {
                let t = data_weight(s.alpha[k], sigma);
                if !t.is_finite() {
                    return Err(OdpError::Config(
                        "gradient descent requires noise_sigma > 0".into(),
                    ));
                }
                let (r, cache) = cnn.forward_cached(x.view())?;
                let resid = term.residual_grad(x.view());
                x = &x + &r - &(t * &resid);
                if record {
                    steps.push(Step::Gd { cache, resid, t });
                }
            }
            Algorithm::PriorOnly => {
                let (r, cache) = cnn.forward_cached(x.view())?;
                x += &r;
                if record {
                    steps.push(Step::PriorOnly { cache });
                }
            }
        }
    }
    let out = if alg.uses_splitting() { z } else { x };
    Ok((out, Tape { steps, lipschitz }))
}

pub(super) fn backward(
    net: &UnrolledNetwork,
    tape: &Tape,
    term: &DataTerm,
    g_out: ArrayView2<'_, f64>,
) -> Result<NetworkGrads> {
    let n = net.iterations();
    if tape.steps.len() != n {
        return Err(OdpError::Config(format!(
            "tape holds {} steps, network has {n} iterations (record the forward pass)",
            tape.steps.len()
        )));
    }
    let mut grads = NetworkGrads::zeros_like(net);
    let constraint = term.is_constraint();
    // gradient w.r.t. the primary iterate (x, or z for splitting methods)
    let mut g = g_out.to_owned();
    let mut gu = Array2::<f64>::zeros(g.dim());

    for k in (0..n).rev() {
        let cnn = net.priors.net(k);
        let pi = net.priors.net_index(k);
        match &tape.steps[k] {
            Step::ProxGrad { cache, x_out, lam } => {
                let (gv, dl) = term.solve_backward(g.view(), x_out.view(), *lam)?;
                if lam.is_finite() && !constraint {
                    grads.log_alpha[k] += dl * lam;
                }
                let (gr, pg) = cnn.backward(cache, gv.view());
                grads.priors[pi].add_assign(&pg);
                g = gv + gr;
            }
            Step::Admm { cache, z_out, lam } => {
                // u' = u + x' - z'
                let gz_tot = &g - &gu;
                let mut gx = gu.clone();
                let (gv, dl) = term.solve_backward(gz_tot.view(), z_out.view(), *lam)?;
                if lam.is_finite() && !constraint {
                    grads.log_alpha[k] += dl * lam;
                    grads.log_rho[k] -= dl * lam;
                }
                gx += &gv;
                gu += &gv;
                let (gr, pg) = cnn.backward(cache, gx.view());
                grads.priors[pi].add_assign(&pg);
                let gw = gx + gr;
                gu -= &gw;
                g = gw;
            }
            Step::Ladmm { cache, resid, c, lam } => {
                let gz_tot = &g - &gu;
                let mut gx = gu.clone();
                let gv = &gz_tot - &(*c * &term.gram(gz_tot.view()));
                if !constraint {
                    let dc = -dot(&gz_tot, resid);
                    grads.log_mu[k] += dc * c;
                    if lam.is_finite() {
                        let dlog_lam = dc * c / (1.0 + lam * tape.lipschitz);
                        grads.log_alpha[k] += dlog_lam;
                        grads.log_rho[k] -= dlog_lam;
                    }
                }
                gx += &gv;
                gu += &gv;
                let (gr, pg) = cnn.backward(cache, gx.view());
                grads.priors[pi].add_assign(&pg);
                let gw = gx + gr;
                gu -= &gw;
                g = gw;
            }
            Step::Gd { cache, resid, t } => {
                grads.log_alpha[k] += -dot(&g, resid) * t;
                let (gr, pg) = cnn.backward(cache, g.view());
                grads.priors[pi].add_assign(&pg);
                let gram = term.gram(g.view());
                g = &g + &gr - &(*t * &gram);
            }
            Step::PriorOnly { cache } => {
                let (gr, pg) = cnn.backward(cache, g.view());
                grads.priors[pi].add_assign(&pg);
                g += &gr;
            }
        }
    }
    Ok(grads)
}
