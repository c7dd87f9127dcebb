//! Blur kernel generators. Every kernel is non-negative, odd-sized and sums
//! to one.

use ndarray::Array2;

use crate::error::{OdpError, Result};
use crate::rng::Rng;

fn normalize(mut k: Array2<f64>) -> Array2<f64> {
    let s = k.sum();
    k.mapv_inplace(|v| v / s);
    k
}

fn check_odd(size: usize, what: &str) -> Result<()> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(OdpError::Config(format!("{what} kernel size must be odd, got {size}")));
    }
    Ok(())
}

pub fn delta(size: usize) -> Array2<f64> {
    let mut k = Array2::zeros((size, size));
    k[(size / 2, size / 2)] = 1.0;
    k
}

/// Antiderivative of `sqrt(r^2 - x^2)` on `[-r, r]`.
fn half_chord_integral(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
}

/// Exact area of the intersection of the origin-centered disk of radius
/// `r` with the rectangle `[x0, x1] x [y0, y1]`.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let a = x0.max(-r);
    let b = x1.min(r);
    if a >= b || y0 >= y1 {
        return 0.0;
    }
    // 0 is where the chord peaks; without it a tangent edge is misclassified
    let mut cuts = vec![a, b, 0.0];
    for y in [y0, y1] {
        if y.abs() < r {
            let s = (r * r - y * y).sqrt();
            cuts.extend([-s, s]);
        }
    }
    cuts.retain(|&c| c >= a && c <= b);
    cuts.sort_by(f64::total_cmp);
    let g = |x: f64| (r * r - x * x).max(0.0).sqrt();
    let mut area = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi <= lo {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        let upper_is_g = gm < y1;
        let lower_is_g = -gm > y0;
        let upper = if upper_is_g { gm } else { y1 };
        let lower = if lower_is_g { -gm } else { y0 };
        if upper <= lower {
            continue;
        }
        let chord = half_chord_integral(hi, r) - half_chord_integral(lo, r);
        let width = hi - lo;
        let up = if upper_is_g { chord } else { y1 * width };
        let low = if lower_is_g { -chord } else { y0 * width };
        area += up - low;
    }
    area
}

/// Uniform disk with rim pixels weighted by their exact covered area.
pub fn make_kernel_disk(radius: f64, size: usize) -> Result<Array2<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OdpError::Config(format!("disk radius must be > 0, got {radius}")));
    }
    check_odd(size, "disk")?;
    if (size as f64) < 2.0 * radius + 1.0 {
        return Err(OdpError::Config(format!(
            "disk kernel size {size} too small for radius {radius} (need >= {})",
            2.0 * radius + 1.0
        )));
    }
    let c = (size / 2) as f64;
    let k = Array2::from_shape_fn((size, size), |(i, j)| {
        let y = i as f64 - c;
        let x = j as f64 - c;
        disk_rect_area(radius, x - 0.5, x + 0.5, y - 0.5, y + 0.5)
    });
    Ok(normalize(k))
}

/// Sampled isotropic Gaussian.
pub fn make_kernel_gaussian(std: f64, size: usize) -> Result<Array2<f64>> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(OdpError::Config(format!("gaussian std must be > 0, got {std}")));
    }
    check_odd(size, "gaussian")?;
    let c = (size / 2) as f64;
    let k = Array2::from_shape_fn((size, size), |(i, j)| {
        let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
        (-d2 / (2.0 * std * std)).exp()
    });
    Ok(normalize(k))
}

/// Uniform `width x width` box. Even widths are centered on the odd grid
/// of size `width + 1` with half-weight border rows and columns.
pub fn make_kernel_box(width: usize) -> Result<Array2<f64>> {
    if width == 0 {
        return Err(OdpError::Config("box width must be >= 1".into()));
    }
    if width % 2 == 1 {
        return Ok(Array2::from_elem((width, width), 1.0 / (width * width) as f64));
    }
    let size = width + 1;
    let edge = |i: usize| if i == 0 || i == size - 1 { 0.5 } else { 1.0 };
    let k = Array2::from_shape_fn((size, size), |(i, j)| edge(i) * edge(j));
    Ok(normalize(k))
}

/// Parameters of the random motion-blur generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    /// Trajectory length range in pixels.
    pub length: (f64, f64),
    /// Initial direction range in degrees.
    pub angle: (f64, f64),
    pub size: usize,
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        check_odd(self.size, "motion")?;
        let (lo, hi) = self.length;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(OdpError::Config(format!("invalid motion length range [{lo}, {hi}]")));
        }
        if hi + 3.0 > self.size as f64 {
            return Err(OdpError::Config(format!(
                "motion length {hi} does not fit a {} kernel (need length + 3 <= size)",
                self.size
            )));
        }
        let (a0, a1) = self.angle;
        if !(a1 >= a0 && a0.is_finite() && a1.is_finite()) {
            return Err(OdpError::Config(format!("invalid motion angle range [{a0}, {a1}]")));
        }
        Ok(())
    }
}

/// Random piecewise-linear camera trajectory, 2 to 4 segments, splatted
/// with bilinear weights and smoothed by a 0.5 px Gaussian. A zero-length
/// trajectory gives an exact delta.
pub fn make_kernel_motion(rng: &mut Rng, params: &MotionParams) -> Result<Array2<f64>> {
    params.validate()?;
    let size = params.size;
    let length = if params.length.1 > params.length.0 {
        rng.uniform_range(params.length.0, params.length.1)
    } else {
        params.length.0
    };
    let heading = if params.angle.1 > params.angle.0 {
        rng.uniform_range(params.angle.0, params.angle.1)
    } else {
        params.angle.0
    }
    .to_radians();
    let segments = 2 + rng.below(3);
    let turns: Vec<f64> = (0..segments)
        .map(|s| if s == 0 { 0.0 } else { rng.uniform_range(-60.0, 60.0).to_radians() })
        .collect();
    if length < 1e-9 {
        return Ok(delta(size));
    }

    let mut pts = vec![(0.0f64, 0.0f64)];
    let mut dir = heading;
    for turn in &turns {
        dir += turn;
        let &(py, px) = pts.last().expect("non-empty");
        let seg = length / segments as f64;
        pts.push((py + seg * dir.sin(), px + seg * dir.cos()));
    }
    // center the trajectory's bounding box on the kernel center
    let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let c = (size / 2) as f64;
    let (oy, ox) = (c - 0.5 * (ymin + ymax), c - 0.5 * (xmin + xmax));

    let mut k = Array2::<f64>::zeros((size, size));
    let step = 0.05;
    for w in pts.windows(2) {
        let ((y0, x0), (y1, x1)) = (w[0], w[1]);
        let seg_len = ((y1 - y0).powi(2) + (x1 - x0).powi(2)).sqrt();
        let n = (seg_len / step).ceil().max(1.0) as usize;
        for s in 0..n {
            let t = (s as f64 + 0.5) / n as f64;
            let py = y0 + t * (y1 - y0) + oy;
            let px = x0 + t * (x1 - x0) + ox;
            splat(&mut k, py, px, seg_len / n as f64);
        }
    }
    let smooth = make_kernel_gaussian(0.5, 5)?;
    let k = convolve_same(&k, &smooth);
    Ok(normalize(k))
}

fn splat(k: &mut Array2<f64>, y: f64, x: f64, w: f64) {
    let (n, m) = k.dim();
    let (iy, ix) = (y.floor(), x.floor());
    let (fy, fx) = (y - iy, x - ix);
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (r, c) = (iy as isize + dy, ix as isize + dx);
            if r >= 0 && c >= 0 && (r as usize) < n && (c as usize) < m {
                k[(r as usize, c as usize)] += w * wy * wx;
            }
        }
    }
}

/// Zero-padded same-size convolution with a small odd kernel.
fn convolve_same(x: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let (kh, kw) = k.dim();
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = 0.0;
        for a in 0..kh as isize {
            for b in 0..kw as isize {
                let (r, c) = (i as isize - (a - ch), j as isize - (b - cw));
                if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                    acc += k[(a as usize, b as usize)] * x[(r as usize, c as usize)];
                }
            }
        }
        acc
    })
}
