//! Residual CNN prior.
//!
//! Each unrolled iteration owns a plain convolutional network (or all
//! iterations share one). The network returns only the residual branch; the
//! unrolled update adds it to the current iterate.

mod conv;

pub use conv::{col2im, im2col, ConvLayer, Padding};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{OdpError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

fn default_kernel_size() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorNetConfig {
    /// Number of convolution layers.
    pub depth: usize,
    /// Hidden width.
    pub channels: usize,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    #[serde(default)]
    pub share_across_iterations: bool,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub padding: Padding,
}

impl PriorNetConfig {
    pub fn new(depth: usize, channels: usize) -> Self {
        Self {
            depth,
            channels,
            kernel_size: 3,
            share_across_iterations: false,
            activation: Activation::Relu,
            padding: Padding::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(OdpError::Config(format!("prior depth must be >= 2, got {}", self.depth)));
        }
        if self.channels < 1 {
            return Err(OdpError::Config("prior channels must be >= 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(OdpError::Config(format!(
                "prior kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// `(in, out)` channel counts per layer.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let i = if l == 0 { 1 } else { self.channels };
                let o = if l + 1 == self.depth { 1 } else { self.channels };
                (i, o)
            })
            .collect()
    }

    /// Parameter count of one network.
    pub fn params_per_net(&self) -> usize {
        let k2 = self.kernel_size * self.kernel_size;
        self.layer_channels().iter().map(|&(i, o)| o * i * k2 + o).sum()
    }
}

/// One residual CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorNet {
    pub layers: Vec<ConvLayer>,
    pub activation: Activation,
    pub padding: Padding,
}

/// Activations recorded by [`PriorNet::forward_cached`].
#[derive(Debug, Clone)]
pub struct PriorCache {
    h: usize,
    w: usize,
    /// Input of every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of every hidden layer.
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients of one [`PriorNet`], laid out like its layers.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl PriorGrads {
    pub fn zeros_like(net: &PriorNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &PriorGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(other.layers.iter()) {
            *w += ow;
            *b += ob;
        }
    }
}

impl PriorNet {
    pub fn zeros(config: &PriorNetConfig) -> Self {
        let layers = config
            .layer_channels()
            .into_iter()
            .map(|(i, o)| ConvLayer::zeros(i, o, config.kernel_size))
            .collect();
        Self {
            layers,
            activation: config.activation,
            padding: config.padding,
        }
    }

    /// Xavier/Glorot uniform weights, zero biases.
    pub fn xavier(config: &PriorNetConfig, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(config);
        let k2 = config.kernel_size * config.kernel_size;
        for layer in &mut net.layers {
            let fan_in = (layer.in_ch * k2) as f64;
            let fan_out = (layer.out_ch * k2) as f64;
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            layer.weight.mapv_inplace(|_| rng.uniform_range(-bound, bound));
        }
        net
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::num_params).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if self.layers.is_empty() || self.layers[0].in_ch != 1 {
            return Err(OdpError::Config("prior network must take one input channel".into()));
        }
        if x.is_empty() {
            return Err(OdpError::Shape("empty input image".into()));
        }
        Ok(())
    }

    /// Residual branch for one `[h, w]` image.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, PriorCache)> {
        self.check_input(&x)?;
        let (h, w) = x.dim();
        let mut cur = x
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((1, h * w))
            .expect("contiguous");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(cur.view(), h, w, self.padding);
            inputs.push(cur);
            if l == last {
                cur = z;
            } else {
                let act = self.activation;
                cur = z.mapv(|v| act.apply(v));
                pre.push(z);
            }
        }
        let out = cur.into_shape_with_order((h, w)).expect("single output channel");
        Ok((out, PriorCache { h, w, inputs, pre }))
    }

    /// Backpropagate `g_out` (gradient at the residual output). Returns the
    /// input gradient and parameter gradients.
    pub fn backward(&self, cache: &PriorCache, g_out: ArrayView2<'_, f64>) -> (Array2<f64>, PriorGrads) {
        let (h, w) = (cache.h, cache.w);
        let mut g = g_out
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((1, h * w))
            .expect("contiguous");
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l + 1 < self.layers.len() {
                let act = self.activation;
                g.zip_mut_with(&cache.pre[l], |gv, &z| *gv *= act.derivative(z));
            }
            let (dw, db, dx) = layer.backward(cache.inputs[l].view(), g.view(), h, w, self.padding, true);
            grads.push((dw, db));
            g = dx.expect("input gradient requested");
        }
        grads.reverse();
        let gx = g.into_shape_with_order((h, w)).expect("single input channel");
        (gx, PriorGrads { layers: grads })
    }
}

/// Prior parameters for all unrolled iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorNetParams {
    pub config: PriorNetConfig,
    pub nets: Vec<PriorNet>,
}

impl PriorNetParams {
    /// Xavier-initialized priors for `iterations` unrolled steps.
    pub fn init(config: &PriorNetConfig, iterations: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let count = if config.share_across_iterations { 1 } else { iterations };
        let nets = (0..count).map(|_| PriorNet::xavier(config, rng)).collect();
        Ok(Self {
            config: config.clone(),
            nets,
        })
    }

    pub fn zeros(config: &PriorNetConfig, iterations: usize) -> Self {
        let count = if config.share_across_iterations { 1 } else { iterations };
        Self {
            config: config.clone(),
            nets: (0..count).map(|_| PriorNet::zeros(config)).collect(),
        }
    }

    /// Network used at iteration `k`.
    pub fn net(&self, k: usize) -> &PriorNet {
        if self.nets.len() == 1 {
            &self.nets[0]
        } else {
            &self.nets[k]
        }
    }

    pub fn net_index(&self, k: usize) -> usize {
        if self.nets.len() == 1 {
            0
        } else {
            k
        }
    }

    pub fn num_params(&self) -> usize {
        self.nets.iter().map(PriorNet::num_params).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.nets.iter().all(|n| {
            n.layers
                .iter()
                .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
        })
    }
}

/// Initialize per-iteration prior parameters.
pub fn init_prior(config: &PriorNetConfig, iterations: usize, rng: &mut Rng) -> Result<PriorNetParams> {
    PriorNetParams::init(config, iterations, rng)
}

/// Residual branch of the prior for every plane of a spatial tensor.
pub fn prior_step(
    x: &crate::tensor::ImageTensor,
    net: &PriorNet,
) -> Result<crate::tensor::ImageTensor> {
    x.spatial_real()?;
    x.map_planes(|p| net.forward(p))
}

#[cfg(test)]
mod tests;
