//! Image quality metrics.

use ndarray::{ArrayView2, Axis, Zip};

use crate::error::{OdpError, Result};
use crate::tensor::ImageTensor;

/// Mean squared error on the 0–255 scale between two `[0, 1]` planes.
pub fn mse_255(x: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, clip: bool) -> f64 {
    let mut acc = 0.0f64;
    Zip::from(&x).and(&reference).for_each(|&a, &b| {
        let a = if clip { a.clamp(0.0, 1.0) } else { a };
        let d = (a - b) * 255.0;
        acc += d * d;
    });
    acc / x.len() as f64
}

/// PSNR in dB for one plane. Returns `f64::INFINITY` when the images match.
pub fn psnr_plane(x: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, clip: bool) -> f64 {
    let mse = mse_255(x, reference, clip);
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// PSNR per batch element, `10 log10(255^2 / MSE)` on the 0–255 scale.
///
/// With `clip` set the reconstruction is clamped to `[0, 1]` first.
pub fn psnr(x: &ImageTensor, reference: &ImageTensor, clip: bool) -> Result<Vec<f64>> {
    let a = x.spatial_real()?;
    let b = reference.spatial_real()?;
    if a.dim() != b.dim() {
        return Err(OdpError::Shape(format!(
            "psnr shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut out = Vec::with_capacity(a.len_of(Axis(0)));
    for (xa, xb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
        let mut acc = 0.0f64;
        let mut n = 0usize;
        for (pa, pb) in xa.axis_iter(Axis(0)).zip(xb.axis_iter(Axis(0))) {
            acc += mse_255(pa, pb, clip) * pa.len() as f64;
            n += pa.len();
        }
        let mse = acc / n as f64;
        out.push(if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0f64 * 255.0 / mse).log10()
        });
    }
    Ok(out)
}

/// Arithmetic mean that propagates the infinite sentinel.
pub fn mean_psnr(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Render a PSNR value for CSV output.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.4}")
    }
}
