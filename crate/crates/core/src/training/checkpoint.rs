//! Checkpoint archive: magic bytes, a little-endian `u64` manifest length,
//! a JSON manifest naming every array, then the arrays as raw
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use crate::error::{OdpError, Result};
use crate::unroll::{UnrollConfig, UnrolledNetwork};

const MAGIC: &[u8; 8] = b"ODPCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: UnrolledNetwork,
    pub optimizer: Option<Adam>,
    pub step: u64,
    /// Best validation PSNR seen so far, if any.
    pub best_val_psnr: Option<f64>,
    /// Free-form snapshot of the run configuration.
    pub config: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    unroll: UnrollConfig,
    step: u64,
    best_val_psnr: Option<f64>,
    adam_t: Option<u64>,
    config: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

struct Writer {
    arrays: Vec<ArrayEntry>,
    blob: Vec<f64>,
}

impl Writer {
    fn push(&mut self, name: String, shape: Vec<usize>, data: impl IntoIterator<Item = f64>) {
        let offset = self.blob.len();
        self.blob.extend(data);
        debug_assert_eq!(self.blob.len() - offset, shape.iter().product::<usize>());
        self.arrays.push(ArrayEntry { name, shape, offset });
    }
}

fn layer_name(k: usize, l: usize, what: &str) -> String {
    format!("prior.{k}.{l}.{what}")
}

impl Checkpoint {
    pub fn new(network: UnrolledNetwork) -> Self {
        Self {
            network,
            optimizer: None,
            step: 0,
            best_val_psnr: None,
            config: serde_json::Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let net = &self.network;
        let mut w = Writer {
            arrays: Vec::new(),
            blob: Vec::new(),
        };
        for (k, p) in net.priors.nets.iter().enumerate() {
            for (l, layer) in p.layers.iter().enumerate() {
                let (o, i) = layer.weight.dim();
                w.push(layer_name(k, l, "weight"), vec![o, i], layer.weight.iter().copied());
                w.push(layer_name(k, l, "bias"), vec![o], layer.bias.iter().copied());
            }
        }
        let s = &net.scalars;
        w.push("scalars.alpha".into(), vec![s.alpha.len()], s.alpha.iter().copied());
        w.push("scalars.rho".into(), vec![s.rho.len()], s.rho.iter().copied());
        w.push("scalars.mu".into(), vec![s.mu.len()], s.mu.iter().copied());
        if let Some(opt) = &self.optimizer {
            w.push("adam.m".into(), vec![opt.m.len()], opt.m.iter().copied());
            w.push("adam.v".into(), vec![opt.v.len()], opt.v.iter().copied());
        }
        let manifest = Manifest {
            format: "odp-checkpoint".into(),
            version: VERSION,
            unroll: net.config.clone(),
            step: self.step,
            best_val_psnr: self.best_val_psnr.filter(|v| v.is_finite()),
            adam_t: self.optimizer.as_ref().map(|o| o.t),
            config: self.config.clone(),
            arrays: w.arrays,
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| OdpError::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * w.blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &w.blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| OdpError::Format(format!("checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if manifest.format != "odp-checkpoint" || manifest.version != VERSION {
            return Err(bad(&format!("unsupported format {} v{}", manifest.format, manifest.version)));
        }
        let raw = &bytes[16 + len..];
        if !raw.len().is_multiple_of(8) {
            return Err(bad("blob length is not a multiple of 8"));
        }
        let blob: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let get = |name: &str, shape: &[usize]| -> Result<&[f64]> {
            let e = manifest
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| bad(&format!("missing array {name}")))?;
            if e.shape != shape {
                return Err(OdpError::Compatibility(format!(
                    "array {name} has shape {:?}, configuration expects {shape:?}",
                    e.shape
                )));
            }
            let n: usize = shape.iter().product();
            blob.get(e.offset..e.offset + n).ok_or_else(|| bad(&format!("array {name} out of range")))
        };

        let mut net = UnrolledNetwork::zero_prior(manifest.unroll.clone())?;
        for (k, p) in net.priors.nets.iter_mut().enumerate() {
            for (l, layer) in p.layers.iter_mut().enumerate() {
                let (o, i) = layer.weight.dim();
                let wv = get(&layer_name(k, l, "weight"), &[o, i])?;
                layer.weight = Array2::from_shape_vec((o, i), wv.to_vec()).expect("shape checked");
                layer.bias = Array1::from(get(&layer_name(k, l, "bias"), &[o])?.to_vec());
            }
        }
        let n = net.iterations();
        net.scalars.alpha = get("scalars.alpha", &[n])?.to_vec();
        net.scalars.rho = get("scalars.rho", &[n])?.to_vec();
        net.scalars.mu = get("scalars.mu", &[n])?.to_vec();
        let optimizer = match manifest.adam_t {
            Some(t) => {
                let len = manifest
                    .arrays
                    .iter()
                    .find(|a| a.name == "adam.m")
                    .map(|a| a.shape.iter().product::<usize>())
                    .ok_or_else(|| bad("missing array adam.m"))?;
                Some(Adam {
                    m: get("adam.m", &[len])?.to_vec(),
                    v: get("adam.v", &[len])?.to_vec(),
                    t,
                })
            }
            None => None,
        };
        Ok(Self {
            network: net,
            optimizer,
            step: manifest.step,
            best_val_psnr: manifest.best_val_psnr,
            config: manifest.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| OdpError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| OdpError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Error unless the stored network has the expected configuration
    /// (scalar initialization aside).
    pub fn check_compatible(&self, expected: &UnrollConfig) -> Result<()> {
        let got = &self.network.config;
        if got.algorithm != expected.algorithm
            || got.iterations != expected.iterations
            || got.prior != expected.prior
        {
            return Err(OdpError::Compatibility(format!(
                "checkpoint holds {} N={} depth={} channels={}, configuration asks for {} N={} depth={} channels={}",
                got.algorithm,
                got.iterations,
                got.prior.depth,
                got.prior.channels,
                expected.algorithm,
                expected.iterations,
                expected.prior.depth,
                expected.prior.channels
            )));
        }
        Ok(())
    }
}
