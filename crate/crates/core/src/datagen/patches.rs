use std::path::Path;

use ndarray::{s, Array2};

use super::corpus::load_corpus;
use crate::error::{OdpError, Result};
use crate::rng::Rng;
use crate::tensor::ImageTensor;

/// Endless stream of random training crops.
///
/// Each epoch visits every image once in a freshly shuffled order and takes
/// one uniformly placed crop per visit. Deterministic for a given seed.
pub struct PatchStream {
    images: Vec<Array2<f64>>,
    patch: usize,
    batch: usize,
    augment: bool,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

/// One drawn crop, for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropInfo {
    pub image: usize,
    pub top: usize,
    pub left: usize,
    /// Number of 90 degree rotations.
    pub rot: u8,
    pub flip: bool,
}

impl PatchStream {
    pub fn new(images: Vec<Array2<f64>>, patch: usize, batch: usize, augment: bool, rng: Rng) -> Result<Self> {
        if images.is_empty() {
            return Err(OdpError::Config("corpus is empty".into()));
        }
        if patch == 0 || batch == 0 {
            return Err(OdpError::Config("patch size and batch size must be >= 1".into()));
        }
        if let Some((i, im)) = images
            .iter()
            .enumerate()
            .find(|(_, im)| im.nrows() < patch || im.ncols() < patch)
        {
            return Err(OdpError::Config(format!(
                "image {i} ({}x{}) is smaller than the {patch}px patch",
                im.nrows(),
                im.ncols()
            )));
        }
        let order = (0..images.len()).collect();
        let mut s = Self {
            images,
            patch,
            batch,
            augment,
            rng,
            order,
            cursor: 0,
            epoch: 0,
        };
        s.reshuffle();
        Ok(s)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    fn reshuffle(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    /// Draw the next crop position without extracting pixels.
    pub fn next_crop(&mut self) -> CropInfo {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let image = self.order[self.cursor];
        self.cursor += 1;
        let (h, w) = self.images[image].dim();
        let top = self.rng.below(h - self.patch + 1);
        let left = self.rng.below(w - self.patch + 1);
        let (rot, flip) = if self.augment {
            (self.rng.below(4) as u8, self.rng.bool())
        } else {
            (0, false)
        };
        CropInfo {
            image,
            top,
            left,
            rot,
            flip,
        }
    }

    pub fn extract(&self, c: &CropInfo) -> Array2<f64> {
        let p = self.patch;
        let mut out = self.images[c.image]
            .slice(s![c.top..c.top + p, c.left..c.left + p])
            .to_owned();
        for _ in 0..c.rot {
            out = out.t().slice(s![.., ..;-1]).to_owned();
        }
        if c.flip {
            out = out.slice(s![.., ..;-1]).to_owned();
        }
        out
    }

    pub fn next_patch(&mut self) -> Array2<f64> {
        let c = self.next_crop();
        self.extract(&c)
    }

    /// Next batch of `batch` patches as a `[batch, 1, p, p]` tensor.
    pub fn next_batch(&mut self) -> ImageTensor {
        let planes: Vec<_> = (0..self.batch).map(|_| self.next_patch()).collect();
        ImageTensor::from_planes(&planes).expect("equal patch shapes")
    }
}

impl Iterator for PatchStream {
    type Item = ImageTensor;

    fn next(&mut self) -> Option<ImageTensor> {
        Some(self.next_batch())
    }
}

/// Patch stream over every image in a corpus directory.
pub fn iterate_patches(dir: &Path, patch: usize, batch: usize, augment: bool, rng: Rng) -> Result<PatchStream> {
    let images = load_corpus(dir)?;
    PatchStream::new(images, patch, batch, augment, rng)
}
