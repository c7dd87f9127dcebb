//! Corpus loading, synthetic stand-in corpora and asset manifests.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OdpError, Result};
use crate::io::{load_plane, save_plane};
use crate::rng::Rng;

/// Sorted PNG files of a directory.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| OdpError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| OdpError::io(dir, e))?.path();
        if p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Load every PNG of a directory as a grayscale `[0, 1]` plane.
pub fn load_corpus(dir: &Path) -> Result<Vec<Array2<f64>>> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(OdpError::Config(format!("no PNG images in {}", dir.display())));
    }
    files.iter().map(|p| load_plane(p)).collect()
}

/// Synthetic image families used when no real corpus is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Occluding disks with power-law radii and shaded interiors.
    DeadLeaves,
    /// Random-ellipse head phantoms.
    Phantom,
}

/// Dead-leaves image: occluding shaded disks whose radii follow a
/// `r^-3` law, which gives natural-image-like edge statistics.
pub fn dead_leaves(rng: &mut Rng, h: usize, w: usize) -> Array2<f64> {
    let mut img = Array2::from_elem((h, w), rng.uniform_range(0.2, 0.8));
    let rmin = 1.0f64;
    let rmax = (h.min(w) as f64 / 3.0).max(2.0);
    let count = (h * w) / 6 + 8;
    let (a, b) = (rmin.powi(-2), rmax.powi(-2));
    for _ in 0..count {
        let r = (a - rng.uniform() * (a - b)).powf(-0.5);
        let cy = rng.uniform_range(-r, h as f64 + r);
        let cx = rng.uniform_range(-r, w as f64 + r);
        let base = rng.uniform_range(0.05, 0.95);
        let gy = rng.normal() * 0.3 / rmax;
        let gx = rng.normal() * 0.3 / rmax;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(h);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize).min(w);
        for i in y0..y1 {
            for j in x0..x1 {
                let (dy, dx) = (i as f64 + 0.5 - cy, j as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= r * r {
                    img[(i, j)] = (base + gy * dy + gx * dx).clamp(0.0, 1.0);
                }
            }
        }
    }
    img
}

fn fill_ellipse(img: &mut Array2<f64>, cy: f64, cx: f64, a: f64, b: f64, phi: f64, value: f64, add: bool) {
    let (h, w) = img.dim();
    let (s, c) = phi.sin_cos();
    for i in 0..h {
        for j in 0..w {
            let y = 2.0 * (i as f64 + 0.5) / h as f64 - 1.0 - cy;
            let x = 2.0 * (j as f64 + 0.5) / w as f64 - 1.0 - cx;
            let (u, v) = (c * x + s * y, -s * x + c * y);
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                if add {
                    img[(i, j)] += value;
                } else {
                    img[(i, j)] = value;
                }
            }
        }
    }
}

/// Magnitude head phantom: a bright skull ring, gray interior and a
/// random set of internal ellipses, with values in `[0, 1]`.
pub fn mri_phantom(rng: &mut Rng, h: usize, w: usize) -> Array2<f64> {
    let mut img = Array2::zeros((h, w));
    let a = rng.uniform_range(0.68, 0.8);
    let b = rng.uniform_range(0.82, 0.92);
    let phi = rng.uniform_range(-0.2, 0.2);
    let (cy, cx) = (rng.uniform_range(-0.03, 0.03), rng.uniform_range(-0.03, 0.03));
    fill_ellipse(&mut img, cy, cx, a, b, phi, rng.uniform_range(0.85, 1.0), false);
    let t = rng.uniform_range(0.05, 0.09);
    fill_ellipse(&mut img, cy, cx, a - t, b - t, phi, rng.uniform_range(0.25, 0.4), false);
    let inner = 6 + rng.below(7);
    for _ in 0..inner {
        let ea = rng.uniform_range(0.04, 0.3);
        let eb = rng.uniform_range(0.04, 0.3);
        let ey = rng.uniform_range(-0.55, 0.55) * (b - t - eb).max(0.1);
        let ex = rng.uniform_range(-0.55, 0.55) * (a - t - ea).max(0.1);
        let v = rng.uniform_range(-0.2, 0.35);
        fill_ellipse(&mut img, cy + ey, cx + ex, ea, eb, rng.uniform_range(0.0, std::f64::consts::PI), v, true);
    }
    img.mapv_inplace(|v| v.clamp(0.0, 1.0));
    img
}

pub fn synthesize_image(kind: SyntheticKind, rng: &mut Rng, h: usize, w: usize) -> Array2<f64> {
    match kind {
        SyntheticKind::DeadLeaves => dead_leaves(rng, h, w),
        SyntheticKind::Phantom => mri_phantom(rng, h, w),
    }
}

/// Write `count` synthetic PNGs (`img_0000.png`, ...) into `dir`. Image
/// `i` depends only on `(seed, i)`.
pub fn write_synthetic_corpus(
    dir: &Path,
    kind: SyntheticKind,
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))?;
    let root = Rng::new(seed);
    (0..count)
        .map(|i| {
            let mut rng = root.child(i as u64);
            let img = synthesize_image(kind, &mut rng, size, size);
            let path = dir.join(format!("img_{i:04}.png"));
            save_plane(img.view(), &path)?;
            Ok(path)
        })
        .collect()
}

/// Downloadable asset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asset {
    pub name: String,
    pub url: String,
    /// Lowercase hex digest.
    pub sha256: String,
    /// Location relative to the data root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub assets: Vec<Asset>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetStatus {
    Verified,
    Missing,
    Mismatch { actual: String },
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| OdpError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| OdpError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| OdpError::Format(format!("{}: {e}", path.display())))
    }

    /// Check every listed asset under `root` against its digest.
    pub fn verify(&self, root: &Path) -> Result<Vec<(String, AssetStatus)>> {
        self.assets
            .iter()
            .map(|a| {
                let p = root.join(&a.path);
                let status = if !p.exists() {
                    AssetStatus::Missing
                } else {
                    let actual = sha256_file(&p)?;
                    if actual.eq_ignore_ascii_case(&a.sha256) {
                        AssetStatus::Verified
                    } else {
                        AssetStatus::Mismatch { actual }
                    }
                };
                Ok((a.name.clone(), status))
            })
            .collect()
    }
}
