//! Two-dimensional DFT.
//!
//! Forward transform is unnormalized, the inverse is scaled by `1/(HW)`.
//! Under this convention circular convolution is a plain pointwise product
//! in the Fourier domain.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, Array4, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{OdpError, Result};
use crate::tensor::{Domain, ImageTensor};

thread_local! {
    static PLANNER: RefCell<Planner> = RefCell::new(Planner::default());
}

struct Planner {
    inner: FftPlanner<f64>,
    cache: HashMap<(usize, bool), Arc<dyn Fft<f64>>>,
}

impl Default for Planner {
    fn default() -> Self {
        Self {
            inner: FftPlanner::new(),
            cache: HashMap::new(),
        }
    }
}

impl Planner {
    fn plan(&mut self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let inner = &mut self.inner;
        self.cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    inner.plan_fft_inverse(len)
                } else {
                    inner.plan_fft_forward(len)
                }
            })
            .clone()
    }
}

fn transform_in_place(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan(w, inverse), p.plan(h, inverse))
    });
    if !data.is_standard_layout() {
        *data = data.as_standard_layout().to_owned();
    }
    let buf = data.as_slice_mut().expect("standard layout");
    row_fft.process(buf);
    let mut col = vec![Complex64::default(); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = buf[i * w + j];
        }
        col_fft.process(&mut col);
        for i in 0..h {
            buf[i * w + j] = col[i];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn fft2_plane_complex(x: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = x.as_standard_layout().to_owned();
    transform_in_place(&mut out, false);
    out
}

pub fn fft2_plane(x: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let mut out = x.mapv(|v| Complex64::new(v, 0.0));
    transform_in_place(&mut out, false);
    out
}

pub fn ifft2_plane(x: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = x.as_standard_layout().to_owned();
    transform_in_place(&mut out, true);
    out
}

/// Inverse transform keeping the real part.
pub fn ifft2_plane_real(x: &Array2<Complex64>) -> Array2<f64> {
    ifft2_plane(x).mapv(|v| v.re)
}

/// Move the DC bin from index `(0, 0)` to the array center.
pub fn fftshift<T: Clone>(x: &Array2<T>) -> Array2<T> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        x[((i + h - h / 2) % h, (j + w - w / 2) % w)].clone()
    })
}

/// Inverse of [`fftshift`].
pub fn ifftshift<T: Clone>(x: &Array2<T>) -> Array2<T> {
    let (h, w) = x.dim();
    Array2::from_shape_fn((h, w), |(i, j)| x[((i + h / 2) % h, (j + w / 2) % w)].clone())
}

fn map_complex(
    x: &ImageTensor,
    f: impl Fn(&Array2<Complex64>) -> Array2<Complex64>,
) -> Array4<Complex64> {
    let mut data = x.to_complex();
    for mut batch in data.axis_iter_mut(Axis(0)) {
        for mut plane in batch.axis_iter_mut(Axis(0)) {
            let out = f(&plane.to_owned());
            plane.assign(&out);
        }
    }
    data
}

/// Forward 2-D DFT over the trailing two axes; the result is Fourier-tagged.
pub fn fft2(x: &ImageTensor) -> Result<ImageTensor> {
    if x.domain() != Domain::Spatial {
        return Err(OdpError::Domain("fft2 expects a spatial tensor".into()));
    }
    ImageTensor::complex(map_complex(x, fft2_plane_complex), Domain::Fourier)
}

/// Inverse 2-D DFT; the result is spatial-tagged and complex.
pub fn ifft2(x: &ImageTensor) -> Result<ImageTensor> {
    if x.domain() != Domain::Fourier {
        return Err(OdpError::Domain("ifft2 expects a Fourier tensor".into()));
    }
    ImageTensor::complex(map_complex(x, ifft2_plane), Domain::Spatial)
}
