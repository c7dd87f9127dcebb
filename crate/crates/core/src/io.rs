//! PNG image, kernel-grid and mask file I/O.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, Luma};
use ndarray::{Array2, ArrayView2};

use crate::error::{OdpError, Result};
use crate::fft::{fftshift, ifftshift};
use crate::tensor::ImageTensor;

/// BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Load an 8- or 16-bit gray or RGB(A) raster as a `[0, 1]` plane.
pub fn load_plane(path: &Path) -> Result<Array2<f64>> {
    let reader = ImageReader::open(path)
        .map_err(|e| OdpError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| OdpError::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| OdpError::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = match img {
        DynamicImage::ImageLuma8(buf) => {
            Array2::from_shape_fn((h, w), |(i, j)| buf.get_pixel(j as u32, i as u32)[0] as f64 / 255.0)
        }
        DynamicImage::ImageLumaA8(buf) => {
            Array2::from_shape_fn((h, w), |(i, j)| buf.get_pixel(j as u32, i as u32)[0] as f64 / 255.0)
        }
        DynamicImage::ImageLuma16(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            buf.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0
        }),
        DynamicImage::ImageLumaA16(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            buf.get_pixel(j as u32, i as u32)[0] as f64 / 65535.0
        }),
        DynamicImage::ImageRgb8(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            let p = buf.get_pixel(j as u32, i as u32);
            luma([p[0], p[1], p[2]].map(|c| c as f64 / 255.0))
        }),
        DynamicImage::ImageRgba8(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            let p = buf.get_pixel(j as u32, i as u32);
            luma([p[0], p[1], p[2]].map(|c| c as f64 / 255.0))
        }),
        DynamicImage::ImageRgb16(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            let p = buf.get_pixel(j as u32, i as u32);
            luma([p[0], p[1], p[2]].map(|c| c as f64 / 65535.0))
        }),
        DynamicImage::ImageRgba16(buf) => Array2::from_shape_fn((h, w), |(i, j)| {
            let p = buf.get_pixel(j as u32, i as u32);
            luma([p[0], p[1], p[2]].map(|c| c as f64 / 65535.0))
        }),
        other => {
            return Err(OdpError::Format(format!(
                "{}: unsupported pixel format {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(plane)
}

fn luma(rgb: [f64; 3]) -> f64 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}

/// Load an image file as a spatial tensor of shape `[1, 1, H, W]`.
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    load_plane(path).map(ImageTensor::from_plane)
}

/// Quantize `[0, 1]` intensities to 8 bits: clip, then round half up.
pub fn quantize_u8(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn save_plane(plane: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let (h, w) = plane.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize_u8(plane[(y as usize, x as usize)])])
    });
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))?;
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| OdpError::Format(format!("{}: {e}", path.display())))
}

/// Write a spatial, real, batch-1 tensor as an 8-bit grayscale PNG.
pub fn save_image(x: &ImageTensor, path: &Path) -> Result<()> {
    let data = x.spatial_real()?;
    let (b, c, _, _) = data.dim();
    if b != 1 || c != 1 {
        return Err(OdpError::Shape(format!(
            "save_image expects batch=1, channel=1, got batch={b}, channel={c}"
        )));
    }
    save_plane(x.plane(0, 0)?, path)
}

/// Parse a whitespace-separated 2-D float grid. `#` starts a comment.
pub fn parse_grid(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|e| {
                    OdpError::Format(format!("line {}: bad number {t:?}: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let h = rows.len();
    if h == 0 {
        return Err(OdpError::Format("empty grid".into()));
    }
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(OdpError::Format("ragged grid rows".into()));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(OdpError::Format("grid contains non-finite values".into()));
    }
    Ok(Array2::from_shape_vec((h, w), flat).expect("rectangular grid"))
}

pub fn format_grid(grid: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in grid.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_kernel(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| OdpError::io(path, e))?;
    parse_grid(&text)
}

pub fn save_kernel(kernel: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    fs::write(path, format_grid(kernel)).map_err(|e| OdpError::io(path, e))
}

/// Load a sampling mask PNG (nonzero = sampled).
///
/// Mask files are stored with the DC bin at the image center; the returned
/// mask uses DFT index layout with DC at `(0, 0)`.
pub fn load_mask(path: &Path) -> Result<Array2<f64>> {
    let plane = load_plane(path)?;
    let centered = plane.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    Ok(ifftshift(&centered))
}

/// Write a DFT-layout mask as a centered PNG.
pub fn save_mask(mask: &Array2<f64>, path: &Path) -> Result<()> {
    save_plane(fftshift(mask).view(), path)
}
