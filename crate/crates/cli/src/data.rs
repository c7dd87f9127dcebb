//! Corpora, validation and test sets for an experiment.

use std::path::PathBuf;

use ndarray::{s, Array2};
use odp_core::datagen::{load_corpus, synthesize_image, DegradationSpec, PatchStream};
use odp_core::training::{make_samples, Sample, SyntheticSource};
use odp_core::{OdpError, Result, Rng};

use crate::config::Experiment;

// Independent streams derived from the corpus and training seeds.
const CORPUS_TRAIN: u64 = 0;
const CORPUS_VAL: u64 = 1;
const CORPUS_TEST: u64 = 2;
pub(crate) const STREAM_INIT: u64 = 0;
const STREAM_PATCHES: u64 = 1;
const STREAM_DEGRADE: u64 = 2;
const STREAM_VAL: u64 = 3;
pub(crate) const STREAM_PROXY: u64 = 4;

/// Where the images of a split came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Directory(PathBuf),
    Synthetic,
}

/// One evaluation protocol: degraded test samples and their ids.
#[derive(Debug, Clone)]
pub struct TestSet {
    /// Empty for the main problem, otherwise the eval set name.
    pub name: String,
    pub samples: Vec<Sample>,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train_images: Vec<Array2<f64>>,
    pub train_source: Source,
    pub val: Vec<Sample>,
    pub test_source: Source,
    pub tests: Vec<TestSet>,
    pub specs: Vec<DegradationSpec>,
}

fn loaded(spec: &DegradationSpec) -> Result<DegradationSpec> {
    let mut s = spec.clone();
    s.load_files()?;
    Ok(s)
}

fn center_crop(x: &Array2<f64>, p: usize) -> Result<Array2<f64>> {
    let (h, w) = x.dim();
    if h < p || w < p {
        return Err(OdpError::Config(format!("validation image {h}x{w} smaller than patch {p}")));
    }
    let (t, l) = ((h - p) / 2, (w - p) / 2);
    Ok(x.slice(s![t..t + p, l..l + p]).to_owned())
}

fn synthetic(exp: &Experiment, stream: u64, count: usize, size: usize) -> Vec<Array2<f64>> {
    let d = &exp.config.data;
    let root = Rng::new(d.corpus_seed).child(stream);
    (0..count)
        .map(|i| synthesize_image(d.synthetic, &mut root.child(i as u64), size, size))
        .collect()
}

fn directory(exp: &Experiment, sub: &Option<PathBuf>) -> Option<PathBuf> {
    let dir = exp.data_root.join(sub.as_ref()?);
    if dir.is_dir() {
        Some(dir)
    } else {
        log::warn!("event=missing_corpus dir={} fallback=synthetic", dir.display());
        None
    }
}

impl ExperimentData {
    pub fn prepare(exp: &Experiment) -> Result<Self> {
        let cfg = &exp.config;
        let d = &cfg.data;
        let patch = cfg.train.patch;

        let (train_images, train_source, val_clean) = match directory(exp, &d.train_dir) {
            Some(dir) => {
                let mut imgs = load_corpus(&dir)?;
                // hold out the tail of a real corpus for validation
                let n_val = d.val_images.min(imgs.len().saturating_sub(1));
                let val = imgs
                    .split_off(imgs.len() - n_val)
                    .iter()
                    .map(|x| center_crop(x, patch))
                    .collect::<Result<Vec<_>>>()?;
                (imgs, Source::Directory(dir), val)
            }
            None => (
                synthetic(exp, CORPUS_TRAIN, d.train_images, d.image_size),
                Source::Synthetic,
                synthetic(exp, CORPUS_VAL, d.val_images, patch),
            ),
        };
        let specs = cfg.train_specs().iter().map(loaded).collect::<Result<Vec<_>>>()?;

        // validation degradations cycle through the training mix
        let val_root = Rng::new(cfg.train.seed).child(STREAM_VAL);
        let mut val = Vec::with_capacity(val_clean.len());
        for (i, x) in val_clean.iter().enumerate() {
            let spec = &specs[i % specs.len()];
            val.push(odp_core::training::make_sample(x, spec, &mut val_root.child(i as u64))?);
        }

        let (test_clean, test_source, ids) = match directory(exp, &d.test_dir) {
            Some(dir) => {
                let paths = odp_core::datagen::list_pngs(&dir)?;
                let ids: Vec<String> = paths
                    .iter()
                    .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
                    .collect();
                (load_corpus(&dir)?, Source::Directory(dir), ids)
            }
            None => {
                let imgs = synthetic(exp, CORPUS_TEST, d.test_images, d.image_size);
                let ids = (0..imgs.len()).map(|i| format!("test_{i:04}")).collect();
                (imgs, Source::Synthetic, ids)
            }
        };
        let mut tests = vec![TestSet {
            name: String::new(),
            samples: make_samples(&test_clean, &loaded(&cfg.problem)?, d.test_seed)?,
            ids: ids.clone(),
        }];
        for e in &cfg.eval_sets {
            tests.push(TestSet {
                name: e.name.clone(),
                samples: make_samples(&test_clean, &loaded(&e.spec)?, d.test_seed)?,
                ids: ids.clone(),
            });
        }
        Ok(Self {
            train_images,
            train_source,
            val,
            test_source,
            tests,
            specs,
        })
    }

    /// Fresh training stream; identical for every model of one experiment.
    /// `stream` selects an independent sub-stream (used for grid proxies).
    pub fn source(&self, exp: &Experiment, stream: Option<u64>) -> Result<SyntheticSource> {
        let t = &exp.config.train;
        let base = Rng::new(t.seed);
        let root = stream.map_or(base.clone(), |s| base.child(s));
        let stream = PatchStream::new(
            self.train_images.clone(),
            t.patch,
            t.batch,
            t.augment,
            root.child(STREAM_PATCHES),
        )?;
        Ok(SyntheticSource {
            stream,
            specs: self.specs.clone(),
            rng: root.child(STREAM_DEGRADE),
        })
    }
}
