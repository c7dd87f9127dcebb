//! Unrolled optimization networks with learned CNN priors.
//!
//! The crate builds deep networks by unrolling proximal algorithms for a
//! known linear image formation model `y = A x + noise`. Each unrolled
//! iteration alternates a residual CNN prior step with a data step that
//! uses `A`, its adjoint, or a closed-form regularized inverse. Denoising,
//! circular deblurring and compressed-sensing MRI are supported.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod fft;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod prior;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod unroll;

pub use error::{OdpError, Result};
pub use linops::{DataStepParams, ForwardModel, ModelKind};
pub use rng::Rng;
pub use tensor::{Domain, ImageTensor};
pub use unroll::{Algorithm, UnrollConfig, UnrolledNetwork};
