//! Stochastic end-to-end training, evaluation and scalar grid search.

mod checkpoint;
mod grid;
mod optim;

pub use checkpoint::Checkpoint;
pub use grid::{grid_search_scalars, grid_search_unrolled, GridPoint, GridResult};
pub use optim::{apply_update, clip_norm, flatten_grads, num_trainable, Adam, ScalarMask};

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datagen::{synthesize_pair, DegradationSpec, PatchStream};
use crate::error::{OdpError, Result};
use crate::linops::{forward_plane, DataTerm, ForwardModel, Measurement};
use crate::metrics::{format_db, mean_psnr, psnr_plane};
use crate::rng::Rng;
use crate::tensor::{Domain, ImageTensor};
use crate::unroll::{NetworkGrads, UnrolledNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    NegPsnr,
}

fn d_lr() -> f64 {
    1e-3
}
fn d_decay_factor() -> f64 {
    0.5
}
fn d_clip() -> f64 {
    10.0
}
fn d_batch() -> usize {
    16
}
fn d_patch() -> usize {
    64
}
fn d_eval_every() -> usize {
    100
}
fn d_true() -> bool {
    true
}
fn d_c0() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn d_c() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default = "d_c0")]
    pub c0: Vec<f64>,
    #[serde(default = "d_c")]
    pub c: Vec<f64>,
    /// Proxy training steps per grid point; 0 scores the untrained network.
    #[serde(default)]
    pub budget_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            c0: d_c0(),
            c: d_c(),
            budget_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every`
    /// steps; 0 keeps it constant.
    #[serde(default)]
    pub decay_every: usize,
    #[serde(default = "d_decay_factor")]
    pub decay_factor: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[serde(default = "d_clip")]
    pub grad_clip: f64,
    pub steps: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_patch")]
    pub patch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_eval_every")]
    pub eval_every: usize,
    #[serde(default = "d_true")]
    pub augment: bool,
    #[serde(default)]
    pub grid: GridConfig,
}

impl TrainConfig {
    pub fn new(steps: usize) -> Self {
        Self {
            loss: LossKind::Mse,
            learning_rate: d_lr(),
            decay_every: 0,
            decay_factor: d_decay_factor(),
            grad_clip: d_clip(),
            steps,
            batch: d_batch(),
            patch: d_patch(),
            seed: 0,
            eval_every: d_eval_every(),
            augment: true,
            grid: GridConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(OdpError::Config("train.steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(OdpError::Config("train.learning_rate must be > 0".into()));
        }
        self.check_runtime()?;
        let g = &self.grid;
        if g.enabled {
            if g.c0.is_empty() || g.c.is_empty() {
                return Err(OdpError::Config("train.grid candidate lists must be non-empty".into()));
            }
            if g.c0.iter().chain(&g.c).any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(OdpError::Config("train.grid candidates must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    /// Checks needed to run the loop at all (zero learning rate allowed).
    fn check_runtime(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(OdpError::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.batch < 1 || self.patch < 1 {
            return Err(OdpError::Config("train.batch and train.patch must be >= 1".into()));
        }
        if !(self.decay_factor > 0.0) {
            return Err(OdpError::Config("train.decay_factor must be > 0".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(OdpError::Config("train.grad_clip must be >= 0".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.decay_every == 0 {
            self.learning_rate
        } else {
            self.learning_rate * self.decay_factor.powi((step / self.decay_every) as i32)
        }
    }
}

/// A clean image with its operator and measurement.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: Array2<f64>,
    pub model: ForwardModel,
    pub y: Measurement,
}

impl Sample {
    pub fn term(&self) -> Result<DataTerm> {
        DataTerm::new(&self.model, self.y.clone())
    }

    /// Measurement as a tensor (spatial for real data, Fourier for MRI).
    pub fn y_tensor(&self) -> ImageTensor {
        match &self.y {
            Measurement::Real(r) => ImageTensor::from_plane(r.clone()),
            Measurement::Complex(z) => ImageTensor::from_complex_plane(z.clone(), Domain::Fourier),
        }
    }
}

/// Degrade one clean plane.
pub fn make_sample(x: &Array2<f64>, spec: &DegradationSpec, rng: &mut Rng) -> Result<Sample> {
    let pair = synthesize_pair(&ImageTensor::from_plane(x.clone()), spec, rng)?;
    let y = match pair.y.domain() {
        Domain::Fourier => Measurement::Complex(pair.y.complex_plane(0, 0)),
        Domain::Spatial => Measurement::Real(pair.y.plane(0, 0)?.to_owned()),
    };
    Ok(Sample {
        x: x.clone(),
        model: pair.model,
        y,
    })
}

/// Fixed evaluation protocol: image `i` is degraded with
/// `Rng::new(seed).child(i)`.
pub fn make_samples(images: &[Array2<f64>], spec: &DegradationSpec, seed: u64) -> Result<Vec<Sample>> {
    let root = Rng::new(seed);
    images
        .iter()
        .enumerate()
        .map(|(i, x)| make_sample(x, spec, &mut root.child(i as u64)))
        .collect()
}

/// Supplier of training batches.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<Vec<Sample>>;
}

/// Random crops degraded on the fly. With several specs, each sample
/// draws one uniformly.
pub struct SyntheticSource {
    pub stream: PatchStream,
    pub specs: Vec<DegradationSpec>,
    pub rng: Rng,
}

impl BatchSource for SyntheticSource {
    fn next_batch(&mut self) -> Result<Vec<Sample>> {
        let batch = self.stream.next_batch();
        let (b, _, _, _) = batch.shape();
        (0..b)
            .map(|i| {
                let plane = batch.plane(i, 0)?.to_owned();
                let spec = if self.specs.len() == 1 {
                    &self.specs[0]
                } else {
                    &self.specs[self.rng.below(self.specs.len())]
                };
                make_sample(&plane, spec, &mut self.rng)
            })
            .collect()
    }
}

/// Cycles through a fixed list of batches.
pub struct FixedSource {
    batches: Vec<Vec<Sample>>,
    next: usize,
}

impl FixedSource {
    pub fn new(batches: Vec<Vec<Sample>>) -> Result<Self> {
        if batches.is_empty() || batches.iter().any(|b| b.is_empty()) {
            return Err(OdpError::Config("fixed source needs non-empty batches".into()));
        }
        Ok(Self { batches, next: 0 })
    }
}

impl BatchSource for FixedSource {
    fn next_batch(&mut self) -> Result<Vec<Sample>> {
        let b = self.batches[self.next % self.batches.len()].clone();
        self.next += 1;
        Ok(b)
    }
}

/// Per-sample loss and its gradient with respect to the reconstruction.
pub fn loss_and_grad(kind: LossKind, out: &Array2<f64>, x: &Array2<f64>) -> (f64, Array2<f64>) {
    let p = out.len() as f64;
    let diff = out - x;
    let mse = diff.iter().map(|d| d * d).sum::<f64>() / p;
    let g_mse = diff.mapv(|d| 2.0 * d / p);
    match kind {
        LossKind::Mse => (mse, g_mse),
        LossKind::NegPsnr => {
            let m = mse.max(1e-30);
            let scale = 10.0 / (std::f64::consts::LN_10 * m);
            (10.0 * m.log10(), g_mse * scale)
        }
    }
}

/// Mean loss over a batch and the mean gradient.
pub fn batch_loss_and_grads(
    net: &UnrolledNetwork,
    batch: &[Sample],
    kind: LossKind,
) -> Result<(f64, NetworkGrads)> {
    let mut grads = NetworkGrads::zeros_like(net);
    let mut total = 0.0;
    for s in batch {
        let term = s.term()?;
        let (out, tape) = net.forward_tape(&term, s.model.noise_sigma(), true)?;
        let (l, g) = loss_and_grad(kind, &out, &s.x);
        total += l;
        if !l.is_finite() {
            continue;
        }
        grads.add_assign(&net.backward(&tape, &term, g.view())?);
    }
    let b = batch.len() as f64;
    grads.scale(1.0 / b);
    Ok((total / b, grads))
}

/// Mean validation PSNR (unclipped).
pub fn validation_psnr(net: &UnrolledNetwork, val: &[Sample]) -> Result<f64> {
    let mut vals = Vec::with_capacity(val.len());
    for s in val {
        let out = net.reconstruct(&s.term()?, s.model.noise_sigma())?;
        vals.push(psnr_plane(out.view(), s.x.view(), false));
    }
    Ok(mean_psnr(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean training loss since the previous point.
    pub loss: f64,
    pub val_psnr: f64,
}

pub fn write_curves(curve: &[CurvePoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["step", "loss", "val_psnr"]).map_err(|e| csv_err(path, e))?;
    for p in curve {
        w.write_record([p.step.to_string(), format!("{:.8e}", p.loss), format_db(p.val_psnr)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| OdpError::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| OdpError::Format(format!("{}: short row", path.display())))?;
            if s == "inf" {
                return Ok(f64::INFINITY);
            }
            s.parse::<f64>()
                .map_err(|_| OdpError::Format(format!("{}: bad number {s:?}", path.display())))
        };
        out.push(CurvePoint {
            step: field(0)? as usize,
            loss: field(1)?,
            val_psnr: field(2)?,
        });
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> OdpError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => OdpError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        OdpError::Format(format!("{}: {e}", path.display()))
    }
}

/// Where and what a training run writes.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `checkpoint_best.odp`, `checkpoint_last.odp` and
    /// `curves.csv`; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Stored in every checkpoint.
    pub config_snapshot: serde_json::Value,
    /// Prefix for log lines.
    pub tag: String,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    /// Network with the best validation PSNR (the initial network counts).
    pub best: UnrolledNetwork,
    pub best_val_psnr: f64,
    pub best_step: usize,
    pub last_loss: f64,
}

fn checkpoint_of(net: &UnrolledNetwork, adam: &Adam, step: usize, best: f64, opts: &TrainOptions) -> Checkpoint {
    Checkpoint {
        network: net.clone(),
        optimizer: Some(adam.clone()),
        step: step as u64,
        best_val_psnr: Some(best).filter(|v| v.is_finite()),
        config: opts.config_snapshot.clone(),
    }
}

/// Train `net` in place with Adam. `net` ends at the last step; the best
/// validation snapshot is returned in the report.
pub fn train(
    net: &mut UnrolledNetwork,
    source: &mut dyn BatchSource,
    val: &[Sample],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.check_runtime()?;
    if cfg.steps < 1 {
        return Err(OdpError::Config("train.steps must be >= 1".into()));
    }
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))?;
    }
    let eval_every = cfg.eval_every.max(1);
    let mut adam = Adam::new(num_trainable(net));
    let mut curve = Vec::new();
    let init_val = if val.is_empty() { f64::NAN } else { validation_psnr(net, val)? };
    let mut best = net.clone();
    let mut best_val = init_val;
    let mut best_step = 0;
    let mut window = (0.0, 0usize);
    let mut last_loss = f64::NAN;
    let tag = if opts.tag.is_empty() { String::new() } else { format!("run={} ", opts.tag) };

    let finish = |net: &UnrolledNetwork, adam: &Adam, step: usize, best: &UnrolledNetwork, best_val: f64, best_step: usize, curve: &[CurvePoint]| -> Result<()> {
        if let Some(dir) = &opts.out_dir {
            checkpoint_of(net, adam, step, best_val, opts).save(&dir.join("checkpoint_last.odp"))?;
            let mut b = checkpoint_of(best, adam, best_step, best_val, opts);
            b.optimizer = None;
            b.save(&dir.join("checkpoint_best.odp"))?;
            write_curves(curve, &dir.join("curves.csv"))?;
        }
        Ok(())
    };

    for step in 1..=cfg.steps {
        let batch = source.next_batch()?;
        let (loss, grads) = batch_loss_and_grads(net, &batch, cfg.loss)?;
        let mut flat = flatten_grads(net, &grads);
        let finite = loss.is_finite() && flat.iter().all(|v| v.is_finite());
        if !finite {
            log::warn!("{tag}step={step} event=divergence loss={loss}");
            finish(net, &adam, step - 1, &best, best_val, best_step, &curve)?;
            return Err(OdpError::Divergence(format!(
                "non-finite loss or gradient at step {step}; last good state kept (step {})",
                step - 1
            )));
        }
        let gnorm = clip_norm(&mut flat, cfg.grad_clip);
        let lr = cfg.learning_rate_at(step - 1);
        let delta = adam.step(&flat, lr);
        apply_update(net, &delta);
        last_loss = loss;
        window.0 += loss;
        window.1 += 1;

        if step % eval_every == 0 || step == cfg.steps {
            let v = if val.is_empty() { f64::NAN } else { validation_psnr(net, val)? };
            let mean_loss = window.0 / window.1 as f64;
            window = (0.0, 0);
            curve.push(CurvePoint {
                step,
                loss: mean_loss,
                val_psnr: v,
            });
            log::info!(
                "{tag}step={step} loss={mean_loss:.6e} val_psnr={} lr={lr:.3e} grad_norm={gnorm:.3e}",
                format_db(v)
            );
            if v > best_val || (best_val.is_nan() && !v.is_nan()) {
                best_val = v;
                best = net.clone();
                best_step = step;
            }
        }
    }
    finish(net, &adam, cfg.steps, &best, best_val, best_step, &curve)?;
    Ok(TrainReport {
        curve,
        best,
        best_val_psnr: best_val,
        best_step,
        last_loss,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    /// Largest `|P F x - y|` over the set, for masked Fourier operators.
    pub max_constraint_residual: Option<f64>,
}

/// Reconstruct every sample and score it. Returns the report and the
/// reconstructions.
pub fn evaluate(
    net: &UnrolledNetwork,
    samples: &[Sample],
    ids: &[String],
    method: &str,
    clip: bool,
) -> Result<(EvalReport, Vec<Array2<f64>>)> {
    if ids.len() != samples.len() {
        return Err(OdpError::Shape(format!("{} ids for {} samples", ids.len(), samples.len())));
    }
    let mut rows = Vec::with_capacity(samples.len());
    let mut recons = Vec::with_capacity(samples.len());
    let mut residual: Option<f64> = None;
    for (s, id) in samples.iter().zip(ids) {
        let out = net.reconstruct(&s.term()?, s.model.noise_sigma())?;
        if let (Measurement::Complex(y), true) = (&s.y, s.model.is_masked_fourier()) {
            if let Measurement::Complex(ax) = forward_plane(&s.model, out.view())? {
                let r = ax.iter().zip(y.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                residual = Some(residual.map_or(r, |m: f64| m.max(r)));
            }
        }
        rows.push(EvalRow {
            image_id: id.clone(),
            psnr_db: psnr_plane(out.view(), s.x.view(), clip),
        });
        recons.push(out);
    }
    let mean = mean_psnr(&rows.iter().map(|r| r.psnr_db).collect::<Vec<_>>());
    Ok((
        EvalReport {
            method: method.to_string(),
            rows,
            mean_psnr: mean,
            max_constraint_residual: residual,
        },
        recons,
    ))
}

/// `image_id,method,psnr_db` rows for every report, each followed by its
/// `mean` row.
pub fn write_eval_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["image_id", "method", "psnr_db"]).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for row in &r.rows {
            w.write_record([row.image_id.as_str(), r.method.as_str(), &format_db(row.psnr_db)])
                .map_err(|e| csv_err(path, e))?;
        }
        w.write_record(["mean", r.method.as_str(), &format_db(r.mean_psnr)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| OdpError::io(path, e))
}

#[cfg(test)]
mod tests;
