//! Inputs shared by the kernel benchmarks.

use ndarray::Array2;
use odp_core::datagen::{make_kernel_gaussian, synthesize_image, SyntheticKind};
use odp_core::{ForwardModel, ImageTensor, Rng};

pub use odp_core::prior::{PriorNet, PriorNetConfig};
pub use odp_core::{Algorithm, UnrollConfig, UnrolledNetwork};

/// Deterministic dead-leaves test image.
pub fn image(size: usize) -> Array2<f64> {
    synthesize_image(SyntheticKind::DeadLeaves, &mut Rng::new(7), size, size)
}

/// Gaussian blur at sigma 2.55 on the 0-255 scale.
pub fn blur_model() -> ForwardModel {
    ForwardModel::circular_conv(make_kernel_gaussian(1.6, 9).unwrap(), 2.55 / 255.0).unwrap()
}

pub fn tensor(size: usize) -> ImageTensor {
    ImageTensor::from_plane(image(size))
}
