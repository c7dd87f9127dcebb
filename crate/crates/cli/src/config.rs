//! Experiment configuration files.
//!
//! A config is one TOML document. Its top level describes the full-size
//! experiment; an optional `[desk]` table holds overrides that are merged
//! in (table by table) when running with `--scale desk`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use odp_core::datagen::{DegradationSpec, KernelSource, MaskSource, SyntheticKind};
use odp_core::training::TrainConfig;
use odp_core::{OdpError, Result, UnrollConfig};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides `data.root`.
pub const DATA_DIR_ENV: &str = "ODP_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Paper,
    Desk,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale {other:?} (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

fn d_root() -> PathBuf {
    PathBuf::from("data")
}
fn d_synthetic() -> SyntheticKind {
    SyntheticKind::DeadLeaves
}
fn d_val_images() -> usize {
    8
}
fn d_test_seed() -> u64 {
    2024
}

/// Image corpora and the evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus root; relative paths resolve against the config file.
    #[serde(default = "d_root")]
    pub root: PathBuf,
    /// PNG directory under `root`; synthetic images are used when unset
    /// or missing.
    #[serde(default)]
    pub train_dir: Option<PathBuf>,
    #[serde(default)]
    pub test_dir: Option<PathBuf>,
    #[serde(default = "d_synthetic")]
    pub synthetic: SyntheticKind,
    /// Synthetic corpus sizes (ignored for real corpora).
    pub train_images: usize,
    pub test_images: usize,
    #[serde(default = "d_val_images")]
    pub val_images: usize,
    /// Side length of synthetic images.
    pub image_size: usize,
    /// Seed of the synthetic corpora.
    #[serde(default)]
    pub corpus_seed: u64,
    /// Degradation seed of the fixed test protocol.
    #[serde(default = "d_test_seed")]
    pub test_seed: u64,
}

/// An additional evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSet {
    pub name: String,
    pub spec: DegradationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Degradation used for evaluation (and training unless `train_mix`
    /// is given).
    pub problem: DegradationSpec,
    /// Training degradations; each sample draws one uniformly.
    #[serde(default)]
    pub train_mix: Vec<DegradationSpec>,
    #[serde(default)]
    pub eval_sets: Vec<EvalSet>,
    pub network: UnrollConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(OdpError::Config("name must not be empty".into()));
        }
        self.problem.validate()?;
        for s in &self.train_mix {
            s.validate()?;
            if s.family != self.problem.family {
                return Err(OdpError::Config(format!(
                    "train_mix entry is {} but the problem is {}",
                    s.family, self.problem.family
                )));
            }
        }
        for e in &self.eval_sets {
            e.spec.validate()?;
            if e.name.is_empty() || e.name.contains([',', '@', '/']) {
                return Err(OdpError::Config(format!("invalid eval set name {:?}", e.name)));
            }
        }
        self.network.validate()?;
        self.train.validate()?;
        let d = &self.data;
        if d.image_size < 1 || d.test_images < 1 || d.train_images < 1 || d.val_images < 1 {
            return Err(OdpError::Config(
                "data.image_size, train_images, test_images and val_images must be >= 1".into(),
            ));
        }
        if self.train.patch > d.image_size {
            return Err(OdpError::Config(format!(
                "train.patch {} exceeds data.image_size {}",
                self.train.patch, d.image_size
            )));
        }
        Ok(())
    }

    /// Training degradations.
    pub fn train_specs(&self) -> Vec<DegradationSpec> {
        if self.train_mix.is_empty() {
            vec![self.problem.clone()]
        } else {
            self.train_mix.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| OdpError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is serializable")
    }
}

/// Merge `over` into `base` recursively; non-table values replace.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parse config text at the given scale. Errors carry the offending key
/// path.
pub fn parse_config(text: &str, scale: Scale) -> Result<ExperimentConfig> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| OdpError::Config(format!("invalid TOML: {e}")))?;
    let table = value.as_table_mut().ok_or_else(|| OdpError::Config("config must be a table".into()))?;
    let desk = table.remove("desk");
    if scale == Scale::Desk {
        match desk {
            Some(d @ toml::Value::Table(_)) => merge(&mut value, d),
            Some(_) => return Err(OdpError::Config("desk: expected a table".into())),
            None => log::warn!("event=no_desk_overrides detail=\"using full-size settings\""),
        }
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        OdpError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// A loaded experiment with its resolved paths and run options.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scale: Scale,
    /// Directory of the config file.
    pub base_dir: PathBuf,
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    pub dump_images: bool,
    pub psnr_clip: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_images: bool,
    pub psnr_clip: bool,
}

impl Experiment {
    pub fn load(path: &Path, scale: Scale, ov: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| OdpError::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base_dir, scale, ov)
    }

    pub fn from_text(text: &str, base_dir: &Path, scale: Scale, ov: &Overrides) -> Result<Self> {
        let mut config = parse_config(text, scale)?;
        if let Some(seed) = ov.seed {
            config.train.seed = seed;
        }
        let data_root = match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => base_dir.join(&config.data.root),
        };
        resolve_files(&mut config, base_dir)?;
        let out_dir = ov.out.clone().unwrap_or_else(|| config.output.dir.clone());
        Ok(Self {
            config,
            scale,
            base_dir: base_dir.to_path_buf(),
            data_root,
            out_dir,
            dump_images: ov.dump_images,
            psnr_clip: ov.psnr_clip,
        })
    }
}

/// Resolve relative kernel and mask paths against the config directory.
fn resolve_files(cfg: &mut ExperimentConfig, base: &Path) -> Result<()> {
    let fix = |spec: &mut DegradationSpec| -> Result<()> {
        if let Some(KernelSource::File { path }) = &mut spec.kernel {
            *path = base.join(&*path);
        }
        if let Some(MaskSource::File { path }) = &mut spec.mask {
            *path = base.join(&*path);
        }
        Ok(())
    };
    fix(&mut cfg.problem)?;
    for s in &mut cfg.train_mix {
        fix(s)?;
    }
    for e in &mut cfg.eval_sets {
        fix(&mut e.spec)?;
    }
    Ok(())
}
