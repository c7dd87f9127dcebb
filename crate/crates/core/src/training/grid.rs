//! Grid search over the `(C0, C)` scalar-schedule initialization.

use super::{train, validation_psnr, FixedSource, Sample, TrainConfig, TrainOptions};
use crate::error::{OdpError, Result};
use crate::unroll::{AlgorithmScalars, UnrolledNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub c0: f64,
    pub c: f64,
    /// Validation PSNR; `None` when the point diverged.
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub c0: f64,
    pub c: f64,
    pub psnr: f64,
    pub points: Vec<GridPoint>,
}

fn check_candidates(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(OdpError::Config(format!("grid {name} candidates are empty")));
    }
    if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(OdpError::Config(format!("grid {name} candidates must be finite and > 0")));
    }
    Ok(())
}

/// Score every `(c0, c)` pair with `score` and keep the highest. Ties go to
/// the smaller `c0`, then the smaller `c`. A point diverges when `score`
/// returns a divergence error, NaN or `-inf`; any other error aborts.
pub fn grid_search_scalars(
    c0s: &[f64],
    cs: &[f64],
    mut score: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<GridResult> {
    check_candidates("c0", c0s)?;
    check_candidates("c", cs)?;
    let mut points = Vec::with_capacity(c0s.len() * cs.len());
    let mut best: Option<(f64, f64, f64)> = None;
    for &c0 in c0s {
        for &c in cs {
            let psnr = match score(c0, c) {
                Ok(v) if v.is_nan() || v == f64::NEG_INFINITY => None,
                Ok(v) => Some(v),
                Err(OdpError::Divergence(msg)) => {
                    log::warn!("grid c0={c0} c={c} event=divergence detail={msg:?}");
                    None
                }
                Err(e) => return Err(e),
            };
            log::info!(
                "grid c0={c0} c={c} psnr={}",
                psnr.map_or("diverged".to_string(), crate::metrics::format_db)
            );
            if let Some(p) = psnr {
                let better = match best {
                    None => true,
                    Some((b0, b, bp)) => p > bp || (p == bp && (c0 < b0 || (c0 == b0 && c < b))),
                };
                if better {
                    best = Some((c0, c, p));
                }
            }
            points.push(GridPoint { c0, c, psnr });
        }
    }
    match best {
        Some((c0, c, psnr)) => Ok(GridResult { c0, c, psnr, points }),
        None => {
            let listing = points
                .iter()
                .map(|p| format!("(c0={}, c={}): diverged", p.c0, p.c))
                .collect::<Vec<_>>()
                .join("; ");
            Err(OdpError::Divergence(format!("every grid point diverged: {listing}")))
        }
    }
}

/// Grid search for an unrolled network. Each point starts from `init` with
/// the candidate schedule, optionally trains for `cfg.grid.budget_steps`
/// on the fixed `proxy` batches, and is scored by mean validation PSNR.
pub fn grid_search_unrolled(
    init: &UnrolledNetwork,
    proxy: &[Vec<Sample>],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<GridResult> {
    if val.is_empty() {
        return Err(OdpError::Config("grid search needs validation samples".into()));
    }
    let budget = cfg.grid.budget_steps;
    grid_search_scalars(&cfg.grid.c0, &cfg.grid.c, |c0, c| {
        let mut net = init.clone();
        net.config.alpha_init.c0 = c0;
        net.config.alpha_init.c = c;
        net.scalars = AlgorithmScalars::from_config(&net.config);
        if budget > 0 {
            let mut src = FixedSource::new(proxy.to_vec())?;
            let mut pc = cfg.clone();
            pc.steps = budget;
            pc.eval_every = budget;
            let opts = TrainOptions {
                tag: format!("grid c0={c0} c={c}"),
                ..TrainOptions::default()
            };
            train(&mut net, &mut src, &[], &pc, &opts)?;
        }
        validation_psnr(&net, val)
    })
}
