//! Unrolled algorithm networks.
//!
//! Every template starts from the backprojection `x0 = A^H y` and runs a
//! fixed number of iterations, each pairing a residual CNN prior step with a
//! data step:
//!
//! * `prox_gradient`: `x <- solve(x + cnn(x))`, where `solve` is the closed
//!   form minimizer of `alpha_k f(Ax, y) + 1/2 ||x - v||^2` (a hard
//!   projection for noise-free MRI).
//! * `admm`: scaled ADMM on the splitting `x = z`; the prior acts on
//!   `z - u`, the z-update uses the same closed-form solvers with weight
//!   `alpha_k / rho_k`; returns `z`.
//! * `ladmm`: as `admm` but the z-update is linearized around `v`, so it
//!   only applies `A` and `A^H`:
//!   `z = v - mu_k * lam / (1 + lam L) * A^H (A v - y)` with `L = ||A^H A||`.
//! * `gradient_descent`: `x <- x + cnn(x) - alpha_k / sigma^2 * A^H (A x - y)`.
//! * `prior_only`: `x <- x + cnn(x)`, no data steps.
//!
//! The ADMM, linearized ADMM and gradient-descent variants are
//! reconstructions from the standard forms of those methods.
//!
//! Gradients are computed by replaying a recorded tape backwards.

mod tape;

pub use tape::{NetworkGrads, Tape};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{OdpError, Result};
use crate::linops::{DataTerm, ForwardModel, Measurement};
use crate::prior::{PriorNetConfig, PriorNetParams};
use crate::rng::Rng;
use crate::tensor::{Domain, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ProxGradient,
    Admm,
    Ladmm,
    GradientDescent,
    PriorOnly,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::ProxGradient,
        Algorithm::Admm,
        Algorithm::Ladmm,
        Algorithm::GradientDescent,
        Algorithm::PriorOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ProxGradient => "prox_gradient",
            Algorithm::Admm => "admm",
            Algorithm::Ladmm => "ladmm",
            Algorithm::GradientDescent => "gradient_descent",
            Algorithm::PriorOnly => "prior_only",
        }
    }

    /// Whether the algorithm carries a splitting variable and dual.
    pub fn uses_splitting(self) -> bool {
        matches!(self, Algorithm::Admm | Algorithm::Ladmm)
    }

    /// Whether the final iterate satisfies hard measurement constraints.
    pub fn respects_constraints(self) -> bool {
        matches!(self, Algorithm::ProxGradient | Algorithm::Admm | Algorithm::Ladmm)
    }

    pub fn supports(self, model: &ForwardModel) -> bool {
        !(self == Algorithm::GradientDescent && model.is_masked_fourier())
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaInit {
    pub c0: f64,
    pub c: f64,
}

fn default_rho() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnrollConfig {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub alpha_init: AlphaInit,
    #[serde(default)]
    pub learn_alpha: bool,
    /// Initial ADMM / LADMM penalty.
    #[serde(default = "default_rho")]
    pub rho_init: f64,
    pub prior: PriorNetConfig,
}

impl UnrollConfig {
    pub fn new(algorithm: Algorithm, iterations: usize, c0: f64, c: f64, prior: PriorNetConfig) -> Self {
        Self {
            algorithm,
            iterations,
            alpha_init: AlphaInit { c0, c },
            learn_alpha: false,
            rho_init: 1.0,
            prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(OdpError::Config("iterations must be >= 1".into()));
        }
        let AlphaInit { c0, c } = self.alpha_init;
        if !(c0 > 0.0 && c0.is_finite()) || !(c > 0.0 && c.is_finite()) {
            return Err(OdpError::Config(format!(
                "alpha_init requires c0 > 0 and c > 0, got c0={c0}, c={c}"
            )));
        }
        if !(self.rho_init > 0.0) {
            return Err(OdpError::Config("rho_init must be > 0".into()));
        }
        self.prior.validate()
    }

    /// `alpha_k = c0 * c^-k`.
    pub fn alpha_schedule(&self) -> Vec<f64> {
        alpha_schedule(self.alpha_init.c0, self.alpha_init.c, self.iterations)
    }
}

pub fn alpha_schedule(c0: f64, c: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| c0 * c.powi(-(k as i32))).collect()
}

/// Per-iteration algorithm scalars. All are strictly positive; training
/// updates them multiplicatively (gradient steps on their logarithms).
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmScalars {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    /// Step multiplier of the linearized z-update.
    pub mu: Vec<f64>,
}

impl AlgorithmScalars {
    pub fn from_config(config: &UnrollConfig) -> Self {
        let n = config.iterations;
        Self {
            alpha: config.alpha_schedule(),
            rho: vec![config.rho_init; n],
            mu: vec![1.0; n],
        }
    }

    pub fn all_positive(&self) -> bool {
        self.alpha
            .iter()
            .chain(&self.rho)
            .chain(&self.mu)
            .all(|&v| v > 0.0 && v.is_finite())
    }
}

/// Iterate state of a template.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrollState {
    pub x: Array2<f64>,
    pub z: Option<Array2<f64>>,
    pub u: Option<Array2<f64>>,
}

/// Backprojection start: `x = A^H y`, `z = x`, `u = 0` when used.
pub fn init_state(term: &DataTerm, algorithm: Algorithm) -> UnrollState {
    let x = term.backprojection();
    let (z, u) = if algorithm.uses_splitting() {
        (Some(x.clone()), Some(Array2::zeros(x.dim())))
    } else {
        (None, None)
    };
    UnrollState { x, z, u }
}

/// An unrolled network: configuration, priors and algorithm scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNetwork {
    pub config: UnrollConfig,
    pub priors: PriorNetParams,
    pub scalars: AlgorithmScalars,
}

impl UnrolledNetwork {
    /// Xavier-initialized priors and the `c0 * c^-k` schedule.
    pub fn new(config: UnrollConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let priors = PriorNetParams::init(&config.prior, config.iterations, rng)?;
        let scalars = AlgorithmScalars::from_config(&config);
        Ok(Self {
            config,
            priors,
            scalars,
        })
    }

    /// All prior weights zero: every prior step returns zero.
    pub fn zero_prior(config: UnrollConfig) -> Result<Self> {
        config.validate()?;
        let priors = PriorNetParams::zeros(&config.prior, config.iterations);
        let scalars = AlgorithmScalars::from_config(&config);
        Ok(Self {
            config,
            priors,
            scalars,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn iterations(&self) -> usize {
        self.config.iterations
    }

    /// Number of CNN prior parameters.
    pub fn prior_param_count(&self) -> usize {
        self.priors.num_params()
    }

    /// Current `alpha_k` values.
    pub fn alphas(&self) -> &[f64] {
        &self.scalars.alpha
    }

    /// Same network with a different template (priors and scalars kept).
    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        let mut out = self.clone();
        out.config.algorithm = algorithm;
        out
    }

    fn check_supported(&self, term: &DataTerm) -> Result<()> {
        if self.config.algorithm == Algorithm::GradientDescent && term.is_constraint() {
            return Err(OdpError::Unsupported(
                "gradient descent cannot be applied to the constrained MRI formulation".into(),
            ));
        }
        Ok(())
    }

    /// Reconstruct one plane from its bound measurement.
    pub fn reconstruct(&self, term: &DataTerm, sigma: f64) -> Result<Array2<f64>> {
        Ok(self.forward_tape(term, sigma, false)?.0)
    }

    /// Forward pass, optionally recording a tape for [`UnrolledNetwork::backward`].
    pub fn forward_tape(&self, term: &DataTerm, sigma: f64, record: bool) -> Result<(Array2<f64>, Tape)> {
        self.check_supported(term)?;
        tape::forward(self, term, sigma, record)
    }

    /// Gradients of a scalar loss with gradient `g_out` at the network output.
    pub fn backward(&self, tape: &Tape, term: &DataTerm, g_out: ArrayView2<'_, f64>) -> Result<NetworkGrads> {
        tape::backward(self, tape, term, g_out)
    }

    /// Run on every plane of a measurement tensor with one shared model.
    pub fn run(&self, model: &ForwardModel, y: &ImageTensor) -> Result<ImageTensor> {
        if !self.config.algorithm.supports(model) {
            return Err(OdpError::Unsupported(format!(
                "{} is not applicable to {} measurements",
                self.config.algorithm,
                model.kind_name()
            )));
        }
        let (b, c, _, _) = y.shape();
        if c != 1 {
            return Err(OdpError::Shape("only single-channel images are supported".into()));
        }
        let mut planes = Vec::with_capacity(b * c);
        for bi in 0..b {
            for ci in 0..c {
                let m = match y.domain() {
                    Domain::Fourier => Measurement::Complex(y.complex_plane(bi, ci)),
                    Domain::Spatial => Measurement::Real(y.plane(bi, ci)?.to_owned()),
                };
                let term = DataTerm::new(model, m)?;
                planes.push(self.reconstruct(&term, model.noise_sigma())?);
            }
        }
        ImageTensor::from_planes(&planes)
    }
}

fn expect_algorithm(net: &UnrolledNetwork, alg: Algorithm) -> Result<()> {
    if net.config.algorithm != alg {
        return Err(OdpError::Config(format!(
            "network is configured for {}, not {alg}",
            net.config.algorithm
        )));
    }
    Ok(())
}

/// Proximal gradient network.
pub fn run_prox_gradient(model: &ForwardModel, y: &ImageTensor, net: &UnrolledNetwork) -> Result<ImageTensor> {
    expect_algorithm(net, Algorithm::ProxGradient)?;
    net.run(model, y)
}

/// Scaled-form ADMM network; returns the data-consistent iterate `z`.
pub fn run_admm(model: &ForwardModel, y: &ImageTensor, net: &UnrolledNetwork) -> Result<ImageTensor> {
    expect_algorithm(net, Algorithm::Admm)?;
    net.run(model, y)
}

/// Linearized ADMM network; only applies `A` and `A^H`.
pub fn run_ladmm(model: &ForwardModel, y: &ImageTensor, net: &UnrolledNetwork) -> Result<ImageTensor> {
    expect_algorithm(net, Algorithm::Ladmm)?;
    net.run(model, y)
}

/// Residual gradient-descent network.
pub fn run_gradient_descent(model: &ForwardModel, y: &ImageTensor, net: &UnrolledNetwork) -> Result<ImageTensor> {
    expect_algorithm(net, Algorithm::GradientDescent)?;
    net.run(model, y)
}

/// Pure residual network started from the backprojection.
pub fn run_prior_only(model: &ForwardModel, y: &ImageTensor, net: &UnrolledNetwork) -> Result<ImageTensor> {
    expect_algorithm(net, Algorithm::PriorOnly)?;
    net.run(model, y)
}

#[cfg(test)]
mod tests;
