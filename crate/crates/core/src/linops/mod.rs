//! Image formation operators and their closed-form data steps.
//!
//! Three operator families are supported: the identity (denoising), circular
//! convolution with a centered odd-sized kernel (deblurring) and a binary
//! mask applied to the orthonormal DFT (compressed-sensing MRI). Convolution
//! is periodic everywhere so the Fourier-domain solves below are exact.

mod data_term;

pub use data_term::{dot, DataTerm, Measurement, OpCounts};

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{OdpError, Result};
use crate::fft::{fft2_plane, ifft2_plane};
use crate::tensor::{Domain, ImageTensor};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Identity,
    /// Odd-sized kernel, stored with its center at `(kh/2, kw/2)`.
    CircularConv { kernel: Array2<f64> },
    /// 0/1 mask in DFT index layout (DC at `(0, 0)`).
    MaskedFourier { mask: Array2<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    kind: ModelKind,
    noise_sigma: f64,
}

impl ForwardModel {
    pub fn identity(noise_sigma: f64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        Ok(Self {
            kind: ModelKind::Identity,
            noise_sigma,
        })
    }

    pub fn circular_conv(kernel: Array2<f64>, noise_sigma: f64) -> Result<Self> {
        check_sigma(noise_sigma)?;
        let (kh, kw) = kernel.dim();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(OdpError::Config(format!(
                "kernel support must be odd, got {kh}x{kw}"
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(OdpError::Config("kernel contains non-finite values".into()));
        }
        Ok(Self {
            kind: ModelKind::CircularConv { kernel },
            noise_sigma,
        })
    }

    /// Noise-free masked Fourier sampling.
    pub fn masked_fourier(mask: Array2<f64>) -> Result<Self> {
        if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(OdpError::Config("mask must be 0/1 valued".into()));
        }
        Ok(Self {
            kind: ModelKind::MaskedFourier { mask },
            noise_sigma: 0.0,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn is_masked_fourier(&self) -> bool {
        matches!(self.kind, ModelKind::MaskedFourier { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Identity => "identity",
            ModelKind::CircularConv { .. } => "circular_conv",
            ModelKind::MaskedFourier { .. } => "masked_fourier",
        }
    }

    /// Check that the operator can act on `h x w` images.
    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        match &self.kind {
            ModelKind::Identity => Ok(()),
            ModelKind::CircularConv { kernel } => {
                let (kh, kw) = kernel.dim();
                if kh > h || kw > w {
                    Err(OdpError::Config(format!(
                        "kernel {kh}x{kw} larger than image {h}x{w}"
                    )))
                } else {
                    Ok(())
                }
            }
            ModelKind::MaskedFourier { mask } => {
                if mask.dim() != (h, w) {
                    Err(OdpError::Shape(format!(
                        "mask {:?} does not match image {h}x{w}",
                        mask.dim()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(OdpError::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// Scalars of one data step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataStepParams {
    /// Step / penalty weight `alpha_k`.
    pub alpha: f64,
    /// Noise standard deviation on the `[0, 1]` intensity scale.
    pub sigma: f64,
    /// ADMM penalty.
    pub rho: f64,
}

impl DataStepParams {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        Self::with_rho(alpha, sigma, 1.0)
    }

    pub fn with_rho(alpha: f64, sigma: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(rho > 0.0) {
            return Err(OdpError::Config(format!(
                "alpha and rho must be > 0, got alpha={alpha}, rho={rho}"
            )));
        }
        check_sigma(sigma)?;
        Ok(Self { alpha, sigma, rho })
    }

    /// Weight of the data term relative to the unit quadratic, `alpha / sigma^2`.
    /// Infinite when `sigma = 0`.
    pub fn data_weight(&self) -> f64 {
        if self.sigma == 0.0 {
            f64::INFINITY
        } else {
            self.alpha / (self.sigma * self.sigma)
        }
    }
}

/// Place a centered kernel at the origin of an `h x w` periodic grid.
pub fn embed_kernel(kernel: ArrayView2<'_, f64>, h: usize, w: usize) -> Array2<f64> {
    let (kh, kw) = kernel.dim();
    let (ch, cw) = (kh / 2, kw / 2);
    let mut out = Array2::zeros((h, w));
    for ((i, j), &v) in kernel.indexed_iter() {
        let r = (i + h * kh - ch) % h;
        let c = (j + w * kw - cw) % w;
        out[(r, c)] += v;
    }
    out
}

/// Transfer function of a kernel on an `h x w` grid.
pub fn kernel_spectrum(kernel: ArrayView2<'_, f64>, h: usize, w: usize) -> Array2<Complex64> {
    fft2_plane(embed_kernel(kernel, h, w).view())
}

fn unitary_scale(h: usize, w: usize) -> f64 {
    ((h * w) as f64).sqrt()
}

/// `A x` for one plane.
pub fn forward_plane(model: &ForwardModel, x: ArrayView2<'_, f64>) -> Result<Measurement> {
    let (h, w) = x.dim();
    model.check_dims(h, w)?;
    Ok(match &model.kind {
        ModelKind::Identity => Measurement::Real(x.to_owned()),
        ModelKind::CircularConv { kernel } => {
            let k = kernel_spectrum(kernel.view(), h, w);
            let xf = fft2_plane(x);
            Measurement::Real(ifft2_plane(&(&k * &xf)).mapv(|v| v.re))
        }
        ModelKind::MaskedFourier { mask } => {
            let s = unitary_scale(h, w);
            let mut xf = fft2_plane(x);
            xf.zip_mut_with(mask, |v, &m| *v *= m / s);
            Measurement::Complex(xf)
        }
    })
}

/// `A^H y` for one plane, returning the full complex result for the
/// masked Fourier operator.
pub fn adjoint_plane_complex(model: &ForwardModel, y: &Measurement) -> Result<Array2<Complex64>> {
    let (h, w) = y.dim();
    model.check_dims(h, w)?;
    match (&model.kind, y) {
        (ModelKind::Identity, Measurement::Real(y)) => Ok(y.mapv(|v| Complex64::new(v, 0.0))),
        (ModelKind::CircularConv { kernel }, Measurement::Real(y)) => {
            let k = kernel_spectrum(kernel.view(), h, w);
            let yf = fft2_plane(y.view());
            let prod = ndarray::Zip::from(&k)
                .and(&yf)
                .map_collect(|k, y| k.conj() * y);
            Ok(ifft2_plane(&prod))
        }
        (ModelKind::MaskedFourier { mask }, Measurement::Complex(y)) => {
            let s = unitary_scale(h, w);
            let masked = ndarray::Zip::from(y).and(mask).map_collect(|v, &m| v * m);
            Ok(ifft2_plane(&masked).mapv(|v| v * s))
        }
        _ => Err(OdpError::Domain(format!(
            "measurement type does not match {} operator",
            model.kind_name()
        ))),
    }
}

/// `A^H y` for one plane; the real part is kept.
pub fn adjoint_plane(model: &ForwardModel, y: &Measurement) -> Result<Array2<f64>> {
    Ok(adjoint_plane_complex(model, y)?.mapv(|v| v.re))
}

fn measurement_of(y: &ImageTensor, b: usize, c: usize) -> Result<Measurement> {
    match y.domain() {
        Domain::Fourier => Ok(Measurement::Complex(y.complex_plane(b, c))),
        Domain::Spatial => Ok(Measurement::Real(y.plane(b, c)?.to_owned())),
    }
}

fn collect_measurements(ms: Vec<Measurement>, dims: (usize, usize)) -> Result<ImageTensor> {
    let (b, c) = dims;
    let (h, w) = ms[0].dim();
    match &ms[0] {
        Measurement::Real(_) => {
            let mut out = ndarray::Array4::zeros((b, c, h, w));
            for (idx, m) in ms.into_iter().enumerate() {
                if let Measurement::Real(p) = m {
                    out.index_axis_mut(Axis(0), idx / c)
                        .index_axis_mut(Axis(0), idx % c)
                        .assign(&p);
                }
            }
            ImageTensor::real(out, Domain::Spatial)
        }
        Measurement::Complex(_) => {
            let mut out = ndarray::Array4::zeros((b, c, h, w));
            for (idx, m) in ms.into_iter().enumerate() {
                if let Measurement::Complex(p) = m {
                    out.index_axis_mut(Axis(0), idx / c)
                        .index_axis_mut(Axis(0), idx % c)
                        .assign(&p);
                }
            }
            ImageTensor::complex(out, Domain::Fourier)
        }
    }
}

/// Apply the image formation operator to every plane of `x`.
pub fn apply_forward(model: &ForwardModel, x: &ImageTensor) -> Result<ImageTensor> {
    let data = x.spatial_real()?;
    let (b, c, _, _) = data.dim();
    let mut ms = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            ms.push(forward_plane(model, x.plane(bi, ci)?)?);
        }
    }
    collect_measurements(ms, (b, c))
}

/// Apply the adjoint operator. For the masked Fourier operator the real
/// part of the inverse transform is returned.
pub fn apply_adjoint(model: &ForwardModel, y: &ImageTensor) -> Result<ImageTensor> {
    let expect = if model.is_masked_fourier() {
        Domain::Fourier
    } else {
        Domain::Spatial
    };
    if y.domain() != expect {
        return Err(OdpError::Domain(format!(
            "{} adjoint expects a {expect:?} tensor",
            model.kind_name()
        )));
    }
    let (b, c, _, _) = y.shape();
    let mut planes = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let m = measurement_of(y, bi, ci)?;
            planes.push(adjoint_plane(model, &m)?);
        }
    }
    planes_to_tensor(planes, (b, c))
}

fn planes_to_tensor(planes: Vec<Array2<f64>>, dims: (usize, usize)) -> Result<ImageTensor> {
    let (b, c) = dims;
    let (h, w) = planes[0].dim();
    let mut out = ndarray::Array4::zeros((b, c, h, w));
    for (idx, p) in planes.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), idx / c)
            .index_axis_mut(Axis(0), idx % c)
            .assign(&p);
    }
    ImageTensor::real(out, Domain::Spatial)
}

fn check_same_shape(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(OdpError::Shape(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Closed-form minimizer of `(alpha / 2 sigma^2) ||x - y||^2 + 1/2 ||x - v||^2`.
///
/// With `sigma = 0` the data term is a hard constraint and `y` is returned.
pub fn prox_denoise(y: &ImageTensor, v: &ImageTensor, p: &DataStepParams) -> Result<ImageTensor> {
    check_same_shape(y, v)?;
    let ya = y.spatial_real()?;
    let va = v.spatial_real()?;
    let lam = p.data_weight();
    if lam.is_infinite() {
        return Ok(y.clone());
    }
    let out = ndarray::Zip::from(ya)
        .and(va)
        .map_collect(|&y, &v| (lam * y + v) / (1.0 + lam));
    ImageTensor::real(out, Domain::Spatial)
}

/// Closed-form minimizer of `(alpha / 2 sigma^2) ||k * x - y||^2 + 1/2 ||x - v||^2`
/// under periodic boundaries, solved in the Fourier domain.
pub fn prox_deblur(
    y: &ImageTensor,
    v: &ImageTensor,
    model: &ForwardModel,
    p: &DataStepParams,
) -> Result<ImageTensor> {
    if !matches!(model.kind, ModelKind::CircularConv { .. }) {
        return Err(OdpError::Unsupported(format!(
            "prox_deblur requires a circular_conv model, got {}",
            model.kind_name()
        )));
    }
    if !(p.sigma > 0.0) {
        return Err(OdpError::Config("prox_deblur requires sigma > 0".into()));
    }
    check_same_shape(y, v)?;
    y.spatial_real()?;
    let lam = p.data_weight();
    let (b, c, _, _) = y.shape();
    let mut planes = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let term = DataTerm::new(model, Measurement::Real(y.plane(bi, ci)?.to_owned()))?;
            planes.push(term.solve(v.plane(bi, ci)?, lam)?);
        }
    }
    planes_to_tensor(planes, (b, c))
}

/// Euclidean projection of `v` onto `{x : P F x = y}`.
pub fn project_mri(y: &ImageTensor, v: &ImageTensor, model: &ForwardModel) -> Result<ImageTensor> {
    let ModelKind::MaskedFourier { mask } = &model.kind else {
        return Err(OdpError::Unsupported(format!(
            "project_mri requires a masked_fourier model, got {}",
            model.kind_name()
        )));
    };
    if y.domain() != Domain::Fourier {
        return Err(OdpError::Domain("MRI measurements must be Fourier-tagged".into()));
    }
    let (b, c, h, w) = y.shape();
    let (vb, vc, vh, vw) = v.shape();
    if (b, c, h, w) != (vb, vc, vh, vw) {
        return Err(OdpError::Shape(format!(
            "shape mismatch: {:?} vs {:?}",
            y.shape(),
            v.shape()
        )));
    }
    let mut planes = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let yp = y.complex_plane(bi, ci);
            if yp.iter().zip(mask.iter()).any(|(v, &m)| m == 0.0 && *v != Complex64::new(0.0, 0.0)) {
                return Err(OdpError::Input(
                    "measurement has nonzero entries outside the sampling mask".into(),
                ));
            }
            let term = DataTerm::new(model, Measurement::Complex(yp))?;
            planes.push(term.solve(v.plane(bi, ci)?, f64::INFINITY)?);
        }
    }
    planes_to_tensor(planes, (b, c))
}

/// Gradient of `f(Ax, y) = (1 / 2 sigma^2) ||Ax - y||^2`.
pub fn grad_data(
    y: &ImageTensor,
    x: &ImageTensor,
    model: &ForwardModel,
    p: &DataStepParams,
) -> Result<ImageTensor> {
    if model.is_masked_fourier() {
        return Err(OdpError::Unsupported(
            "gradient data step is undefined for the constrained MRI formulation".into(),
        ));
    }
    if !(p.sigma > 0.0) {
        return Err(OdpError::Config("grad_data requires sigma > 0".into()));
    }
    check_same_shape(y, x)?;
    let scale = 1.0 / (p.sigma * p.sigma);
    let (b, c, _, _) = x.shape();
    let mut planes = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ci in 0..c {
            let term = DataTerm::new(model, Measurement::Real(y.plane(bi, ci)?.to_owned()))?;
            planes.push(term.residual_grad(x.plane(bi, ci)?).mapv(|v| v * scale));
        }
    }
    planes_to_tensor(planes, (b, c))
}

/// Complex inner product `<a, b> = sum conj(a) b`.
pub fn inner_complex(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn fft_unitary(x: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let (h, w) = x.dim();
    let s = unitary_scale(h, w);
    fft2_plane(x).mapv(|v| v / s)
}

pub(crate) fn ifft_unitary(x: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = x.dim();
    let s = unitary_scale(h, w);
    ifft2_plane(x).mapv(|v| v * s)
}
