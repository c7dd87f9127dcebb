use ndarray::Array2;

use crate::error::{OdpError, Result};
use crate::fft::ifftshift;
use crate::rng::Rng;

/// Allowed deviation of the achieved sampling fraction from the request.
pub const RATIO_TOLERANCE: f64 = 0.02;

const MAX_LINES: usize = 100_000;

/// Pseudo-radial Cartesian sampling mask in DFT layout (DC at `[0, 0]`).
///
/// Lines through the spectrum center are added at golden-angle increments
/// from a random start angle until the sampled fraction reaches `ratio`.
/// The pattern is symmetric under 180 degree rotation about DC, so
/// Hermitian spectra of real images stay Hermitian after masking.
pub fn make_mask_pseudo_radial(rng: &mut Rng, ratio: f64, h: usize, w: usize) -> Result<Array2<f64>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(OdpError::Config(format!("sampling ratio must be in (0, 1], got {ratio}")));
    }
    if h == 0 || w == 0 {
        return Err(OdpError::Shape("empty mask".into()));
    }
    let start = rng.uniform() * std::f64::consts::PI;
    if ratio >= 1.0 {
        return Ok(Array2::ones((h, w)));
    }
    let golden = std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0;
    let (cy, cx) = ((h / 2) as isize, (w / 2) as isize);
    let reach = ((h * h + w * w) as f64).sqrt() / 2.0 + 1.0;
    let total = (h * w) as f64;
    let mut centered = Array2::<f64>::zeros((h, w));
    let mut count = 0usize;
    let set = |m: &mut Array2<f64>, r: isize, c: isize, count: &mut usize| {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m[(r as usize, c as usize)] == 0.0 {
            m[(r as usize, c as usize)] = 1.0;
            *count += 1;
        }
    };
    set(&mut centered, cy, cx, &mut count);

    let mut line = 0usize;
    while (count as f64) / total < ratio {
        if line >= MAX_LINES {
            return Err(OdpError::Config(format!(
                "sampling ratio {ratio} not reachable for a {h}x{w} mask"
            )));
        }
        let theta = start + line as f64 * golden;
        let (s, c) = theta.sin_cos();
        let steps = (2.0 * reach) as isize;
        for t in -steps..=steps {
            let d = t as f64 * 0.5;
            let (dy, dx) = ((d * s).round() as isize, (d * c).round() as isize);
            set(&mut centered, cy + dy, cx + dx, &mut count);
            // mirror about the DC bin, with wraparound for even sizes
            let my = (cy - dy).rem_euclid(h as isize);
            let mx = (cx - dx).rem_euclid(w as isize);
            if (cy + dy) >= 0 && (cy + dy) < h as isize && (cx + dx) >= 0 && (cx + dx) < w as isize {
                set(&mut centered, my, mx, &mut count);
            }
        }
        line += 1;
    }
    let achieved = count as f64 / total;
    if (achieved - ratio).abs() > RATIO_TOLERANCE {
        return Err(OdpError::Config(format!(
            "sampling ratio {ratio} infeasible for a {h}x{w} mask: nearest achievable {achieved:.4}"
        )));
    }
    Ok(ifftshift(&centered))
}

/// Fraction of sampled bins.
pub fn sampled_fraction(mask: &Array2<f64>) -> f64 {
    mask.iter().filter(|&&v| v != 0.0).count() as f64 / mask.len() as f64
}
