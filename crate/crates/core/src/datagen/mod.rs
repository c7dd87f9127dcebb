//! Data pipeline: corpora, patch streams and degradation synthesis.

mod corpus;
mod kernels;
mod mask;
mod patches;

pub use corpus::{
    dead_leaves, list_pngs, load_corpus, mri_phantom, sha256_file, synthesize_image, write_synthetic_corpus, Asset,
    AssetStatus, Manifest, SyntheticKind,
};
pub use kernels::{
    delta, disk_rect_area, make_kernel_box, make_kernel_disk, make_kernel_gaussian, make_kernel_motion, MotionParams,
};
pub use mask::{make_mask_pseudo_radial, sampled_fraction, RATIO_TOLERANCE};
pub use patches::{iterate_patches, CropInfo, PatchStream};

use std::path::PathBuf;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{OdpError, Result};
use crate::io::{load_kernel, load_mask};
use crate::linops::{forward_plane, ForwardModel, Measurement};
use crate::rng::Rng;
use crate::tensor::{Domain, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Denoise,
    Deblur,
    Csmri,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Denoise => "denoise",
            Family::Deblur => "deblur",
            Family::Csmri => "csmri",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSource {
    Disk {
        radius: f64,
        size: usize,
    },
    Gaussian {
        std: f64,
        size: usize,
    },
    Box {
        width: usize,
    },
    /// A new random kernel for every synthesized pair.
    Motion {
        length: [f64; 2],
        angle: [f64; 2],
        size: usize,
    },
    File {
        path: PathBuf,
    },
    #[serde(skip)]
    Fixed(Array2<f64>),
}

impl KernelSource {
    /// Kernel for one pair. Motion kernels consume `rng`; the others are
    /// deterministic.
    pub fn kernel(&self, rng: &mut Rng) -> Result<Array2<f64>> {
        match self {
            KernelSource::Disk { radius, size } => make_kernel_disk(*radius, *size),
            KernelSource::Gaussian { std, size } => make_kernel_gaussian(*std, *size),
            KernelSource::Box { width } => make_kernel_box(*width),
            KernelSource::Motion { length, angle, size } => make_kernel_motion(
                rng,
                &MotionParams {
                    length: (length[0], length[1]),
                    angle: (angle[0], angle[1]),
                    size: *size,
                },
            ),
            KernelSource::File { path } => load_kernel(path),
            KernelSource::Fixed(k) => Ok(k.clone()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, KernelSource::Motion { .. })
    }

    pub fn label(&self) -> String {
        match self {
            KernelSource::Disk { radius, .. } => format!("disk_r{radius}"),
            KernelSource::Gaussian { std, .. } => format!("gaussian_s{std}"),
            KernelSource::Box { width } => format!("box_w{width}"),
            KernelSource::Motion { .. } => "motion".into(),
            KernelSource::File { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into()),
            KernelSource::Fixed(_) => "fixed".into(),
        }
    }
}

fn default_mask_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSource {
    /// Deterministic for a given `(ratio, seed, size)`.
    PseudoRadial {
        ratio: f64,
        #[serde(default = "default_mask_seed")]
        seed: u64,
    },
    /// Centered-layout PNG.
    File { path: PathBuf },
    /// DFT-layout mask.
    #[serde(skip)]
    Fixed(Array2<f64>),
}

impl MaskSource {
    /// DFT-layout mask for an `h x w` image.
    pub fn mask(&self, h: usize, w: usize) -> Result<Array2<f64>> {
        let m = match self {
            MaskSource::PseudoRadial { ratio, seed } => make_mask_pseudo_radial(&mut Rng::new(*seed), *ratio, h, w)?,
            MaskSource::File { path } => load_mask(path)?,
            MaskSource::Fixed(m) => m.clone(),
        };
        if m.dim() != (h, w) {
            return Err(OdpError::Shape(format!("mask is {:?}, image is {:?}", m.dim(), (h, w))));
        }
        Ok(m)
    }
}

/// How measurements are synthesized from clean images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationSpec {
    pub family: Family,
    /// Noise standard deviation on the 0-255 scale.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub kernel: Option<KernelSource>,
    #[serde(default)]
    pub mask: Option<MaskSource>,
}

impl DegradationSpec {
    pub fn denoise(sigma: f64) -> Self {
        Self {
            family: Family::Denoise,
            sigma,
            kernel: None,
            mask: None,
        }
    }

    pub fn deblur(kernel: KernelSource, sigma: f64) -> Self {
        Self {
            family: Family::Deblur,
            sigma,
            kernel: Some(kernel),
            mask: None,
        }
    }

    pub fn csmri(mask: MaskSource) -> Self {
        Self {
            family: Family::Csmri,
            sigma: 0.0,
            kernel: None,
            mask: Some(mask),
        }
    }

    /// Noise standard deviation on the `[0, 1]` intensity scale.
    pub fn noise_sigma(&self) -> f64 {
        self.sigma / 255.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(OdpError::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        match self.family {
            Family::Denoise if self.kernel.is_some() || self.mask.is_some() => {
                Err(OdpError::Config("denoise takes neither kernel nor mask".into()))
            }
            Family::Deblur if self.kernel.is_none() => Err(OdpError::Config("deblur requires a kernel".into())),
            Family::Deblur if self.mask.is_some() => Err(OdpError::Config("deblur takes no mask".into())),
            Family::Csmri if self.mask.is_none() => Err(OdpError::Config("csmri requires a mask".into())),
            Family::Csmri if self.kernel.is_some() => Err(OdpError::Config("csmri takes no kernel".into())),
            Family::Csmri if self.sigma != 0.0 => Err(OdpError::Config("csmri measurements are noise-free".into())),
            _ => Ok(()),
        }
    }

    /// Replace file-backed sources by their loaded contents.
    pub fn load_files(&mut self) -> Result<()> {
        if let Some(KernelSource::File { path }) = &self.kernel {
            self.kernel = Some(KernelSource::Fixed(load_kernel(path)?));
        }
        if let Some(MaskSource::File { path }) = &self.mask {
            self.mask = Some(MaskSource::Fixed(load_mask(path)?));
        }
        Ok(())
    }

    /// Forward model for an `h x w` image. Draws a kernel for random
    /// kernel sources.
    pub fn model(&self, h: usize, w: usize, rng: &mut Rng) -> Result<ForwardModel> {
        self.validate()?;
        let model = match self.family {
            Family::Denoise => ForwardModel::identity(self.noise_sigma())?,
            Family::Deblur => {
                let k = self.kernel.as_ref().expect("validated").kernel(rng)?;
                ForwardModel::circular_conv(k, self.noise_sigma())?
            }
            Family::Csmri => ForwardModel::masked_fourier(self.mask.as_ref().expect("validated").mask(h, w)?)?,
        };
        model.check_dims(h, w)?;
        Ok(model)
    }
}

/// Clean image, its measurement and the operator that produced it.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub x: ImageTensor,
    pub y: ImageTensor,
    pub model: ForwardModel,
}

/// Apply the degradation to every plane of `x` with one shared operator;
/// Gaussian noise is added for the spatial families.
pub fn synthesize_pair(x: &ImageTensor, spec: &DegradationSpec, rng: &mut Rng) -> Result<SamplePair> {
    let xr = x.spatial_real()?;
    let (b, c, h, w) = x.shape();
    if c != 1 {
        return Err(OdpError::Shape("only single-channel images are supported".into()));
    }
    let model = spec.model(h, w, rng)?;
    let sigma = model.noise_sigma();
    let mut real_planes = Vec::new();
    let mut complex_planes = Vec::new();
    for bi in 0..b {
        let plane = xr.slice(ndarray::s![bi, 0, .., ..]);
        match forward_plane(&model, plane)? {
            Measurement::Real(mut r) => {
                if sigma > 0.0 {
                    r.mapv_inplace(|v| v + sigma * rng.normal());
                }
                real_planes.push(r);
            }
            Measurement::Complex(z) => complex_planes.push(z),
        }
    }
    let y = if complex_planes.is_empty() {
        ImageTensor::from_planes(&real_planes)?
    } else {
        let mut data = ndarray::Array4::zeros((b, 1, h, w));
        for (bi, p) in complex_planes.into_iter().enumerate() {
            data.slice_mut(ndarray::s![bi, 0, .., ..]).assign(&p);
        }
        ImageTensor::complex(data, Domain::Fourier)?
    };
    Ok(SamplePair {
        x: x.clone(),
        y,
        model,
    })
}
