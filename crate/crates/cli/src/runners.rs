//! Experiment commands: train, eval, ablate and compare-algs.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use odp_core::io::save_plane;
use odp_core::metrics::format_db;
use odp_core::training::{
    evaluate, grid_search_unrolled, train, write_eval_csv, BatchSource, Checkpoint, EvalReport, GridResult, Sample,
    TrainOptions, TrainReport,
};
use odp_core::{Algorithm, OdpError, Result, Rng, UnrolledNetwork};

use crate::config::Experiment;
use crate::data::{ExperimentData, TestSet, STREAM_INIT, STREAM_PROXY};

/// Most proxy batches drawn for the grid search; they are reused cyclically.
const MAX_PROXY_BATCHES: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    /// Snapshot with the best validation PSNR.
    pub net: UnrolledNetwork,
    pub report: TrainReport,
    pub grid: Option<GridResult>,
    /// Evaluation on every test set, main problem first.
    pub evals: Vec<EvalReport>,
    pub dir: PathBuf,
}

impl TrainedModel {
    pub fn test_psnr(&self) -> f64 {
        self.evals[0].mean_psnr
    }
}

#[derive(Debug, Clone)]
pub enum ModelOutcome {
    Trained(Box<TrainedModel>),
    NotApplicable { algorithm: Algorithm, reason: String },
}

impl ModelOutcome {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ModelOutcome::Trained(m) => m.algorithm,
            ModelOutcome::NotApplicable { algorithm, .. } => *algorithm,
        }
    }

    pub fn trained(&self) -> Option<&TrainedModel> {
        match self {
            ModelOutcome::Trained(m) => Some(m),
            ModelOutcome::NotApplicable { .. } => None,
        }
    }
}

/// One row of an ablation or algorithm comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: Algorithm,
    pub params: usize,
    /// Mean test PSNR; `None` when the algorithm does not apply.
    pub psnr_db: Option<f64>,
    /// Largest measurement residual, for constrained problems.
    pub max_residual: Option<f64>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| OdpError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| OdpError::io(path, e))
}

fn method_name(alg: Algorithm, set: &TestSet) -> String {
    if set.name.is_empty() {
        alg.name().to_string()
    } else {
        format!("{}@{}", alg.name(), set.name)
    }
}

fn proxy_batches(exp: &Experiment, data: &ExperimentData) -> Result<Vec<Vec<Sample>>> {
    let budget = exp.config.train.grid.budget_steps;
    if budget == 0 {
        return Ok(Vec::new());
    }
    let mut src = data.source(exp, Some(STREAM_PROXY))?;
    (0..budget.min(MAX_PROXY_BATCHES)).map(|_| src.next_batch()).collect()
}

/// Grid-search the scalar schedule, train, and evaluate one algorithm.
/// Artifacts go to `dir`.
pub fn train_model(exp: &Experiment, data: &ExperimentData, algorithm: Algorithm, dir: &Path) -> Result<TrainedModel> {
    let cfg = &exp.config;
    create_dir(dir)?;
    let mut ucfg = cfg.network.clone();
    ucfg.algorithm = algorithm;
    // the prior initialization depends on the seed only, so every
    // algorithm starts from the same weights
    let mut net = UnrolledNetwork::new(ucfg, &mut Rng::new(cfg.train.seed).child(STREAM_INIT))?;
    log::info!(
        "run={} algorithm={algorithm} params={} event=start",
        cfg.name,
        net.prior_param_count()
    );

    let grid = if cfg.train.grid.enabled && algorithm != Algorithm::PriorOnly {
        let res = grid_search_unrolled(&net, &proxy_batches(exp, data)?, &data.val, &cfg.train)?;
        let mut text = String::from("c0,c,val_psnr\n");
        for p in &res.points {
            let v = p.psnr.map_or("diverged".to_string(), format_db);
            text.push_str(&format!("{},{},{v}\n", p.c0, p.c));
        }
        write_text(&dir.join("grid.csv"), &text)?;
        net.config.alpha_init.c0 = res.c0;
        net.config.alpha_init.c = res.c;
        net.scalars = odp_core::unroll::AlgorithmScalars::from_config(&net.config);
        log::info!("run={} algorithm={algorithm} grid_c0={} grid_c={}", cfg.name, res.c0, res.c);
        Some(res)
    } else {
        None
    };

    let mut snapshot = cfg.to_json();
    snapshot["network"] = serde_json::to_value(&net.config).expect("serializable");
    let opts = TrainOptions {
        out_dir: Some(dir.to_path_buf()),
        config_snapshot: snapshot,
        tag: format!("{}/{}", cfg.name, algorithm),
    };
    let mut src = data.source(exp, None)?;
    let report = train(&mut net, &mut src, &data.val, &cfg.train, &opts)?;
    let best = report.best.clone();
    let evals = evaluate_all(exp, data, &best, dir)?;
    write_eval_csv(&evals, &dir.join("eval.csv"))?;
    log::info!(
        "run={} algorithm={algorithm} event=done best_step={} test_psnr={}",
        cfg.name,
        report.best_step,
        format_db(evals[0].mean_psnr)
    );
    Ok(TrainedModel {
        algorithm,
        net: best,
        report,
        grid,
        evals,
        dir: dir.to_path_buf(),
    })
}

/// Evaluate on every test set; with `dump_images`, reconstructions and
/// side-by-side panels (clean, backprojection, reconstruction) are written
/// under `dir/recon`.
pub fn evaluate_all(exp: &Experiment, data: &ExperimentData, net: &UnrolledNetwork, dir: &Path) -> Result<Vec<EvalReport>> {
    let mut out = Vec::with_capacity(data.tests.len());
    for set in &data.tests {
        let method = method_name(net.algorithm(), set);
        let (rep, recon) = evaluate(net, &set.samples, &set.ids, &method, exp.psnr_clip)?;
        if exp.dump_images {
            let sub = dir.join("recon").join(if set.name.is_empty() { "main" } else { &set.name });
            for ((s, id), r) in set.samples.iter().zip(&set.ids).zip(&recon) {
                save_plane(r.view(), &sub.join(format!("{id}.png")))?;
                save_plane(panel(s, r)?.view(), &sub.join(format!("{id}_panel.png")))?;
            }
        }
        out.push(rep);
    }
    Ok(out)
}

fn panel(s: &Sample, recon: &Array2<f64>) -> Result<Array2<f64>> {
    let back = s.term()?.backprojection();
    let gap = Array2::from_elem((s.x.nrows(), 2), 1.0);
    concatenate(
        Axis(1),
        &[s.x.view(), gap.view(), back.view(), gap.view(), recon.view()],
    )
    .map_err(|e| OdpError::Shape(e.to_string()))
}

/// Train (or mark not applicable) each algorithm under identical data,
/// seeds and budgets. Model `alg` writes to `out_dir/<alg>`.
pub fn run_algorithms(exp: &Experiment, data: &ExperimentData, algs: &[Algorithm]) -> Result<Vec<ModelOutcome>> {
    let family_model = data.tests[0].samples[0].model.clone();
    let mut out = Vec::with_capacity(algs.len());
    for &alg in algs {
        if !alg.supports(&family_model) {
            let reason = format!("{alg} does not apply to {} measurements", family_model.kind_name());
            log::info!("run={} algorithm={alg} event=not_applicable", exp.config.name);
            out.push(ModelOutcome::NotApplicable { algorithm: alg, reason });
            continue;
        }
        let m = train_model(exp, data, alg, &exp.out_dir.join(alg.name()))?;
        out.push(ModelOutcome::Trained(Box::new(m)));
    }
    Ok(out)
}

pub fn comparison_rows(exp: &Experiment, outcomes: &[ModelOutcome], algs: &[Algorithm]) -> Result<Vec<ComparisonRow>> {
    algs.iter()
        .map(|&alg| {
            let o = outcomes
                .iter()
                .find(|o| o.algorithm() == alg)
                .ok_or_else(|| OdpError::Config(format!("no result for {alg}")))?;
            Ok(match o.trained() {
                Some(m) => ComparisonRow {
                    method: alg,
                    params: m.net.prior_param_count(),
                    psnr_db: Some(m.test_psnr()),
                    max_residual: m.evals[0].max_constraint_residual,
                },
                None => {
                    let mut cfg = exp.config.network.clone();
                    cfg.algorithm = alg;
                    ComparisonRow {
                        method: alg,
                        params: UnrolledNetwork::zero_prior(cfg)?.prior_param_count(),
                        psnr_db: None,
                        max_residual: None,
                    }
                }
            })
        })
        .collect()
}

/// `method,params,psnr_db` with `N/A` for inapplicable algorithms.
pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut text = String::from("method,params,psnr_db\n");
    for r in rows {
        let p = r.psnr_db.map_or("N/A".to_string(), format_db);
        text.push_str(&format!("{},{},{p}\n", r.method.name(), r.params));
    }
    write_text(path, &text)
}

pub fn print_rows(title: &str, rows: &[ComparisonRow]) {
    println!("{title}");
    println!("{:<18} {:>10} {:>10}", "method", "params", "psnr_db");
    for r in rows {
        let p = r.psnr_db.map_or("N/A".to_string(), |v| format!("{v:.2}"));
        println!("{:<18} {:>10} {:>10}", r.method.name(), r.params, p);
    }
}

fn start(exp: &Experiment) -> Result<ExperimentData> {
    create_dir(&exp.out_dir)?;
    write_text(&exp.out_dir.join("config.resolved.toml"), &exp.config.to_toml()?)?;
    let data = ExperimentData::prepare(exp)?;
    log::info!(
        "run={} scale={} train_images={} val={} test={} train_source={:?} test_source={:?}",
        exp.config.name,
        exp.scale,
        data.train_images.len(),
        data.val.len(),
        data.tests[0].samples.len(),
        data.train_source,
        data.test_source
    );
    Ok(data)
}

/// `odp train`: artifacts go directly under the output directory.
pub fn cmd_train(exp: &Experiment) -> Result<TrainedModel> {
    let data = start(exp)?;
    train_model(exp, &data, exp.config.network.algorithm, &exp.out_dir)
}

/// `odp eval`: score a checkpoint (default `<out>/checkpoint_best.odp`).
pub fn cmd_eval(exp: &Experiment, checkpoint: Option<&Path>) -> Result<Vec<EvalReport>> {
    let path = checkpoint.map_or_else(|| exp.out_dir.join("checkpoint_best.odp"), Path::to_path_buf);
    let ck = Checkpoint::load(&path)?;
    ck.check_compatible(&exp.config.network)?;
    create_dir(&exp.out_dir)?;
    let data = ExperimentData::prepare(exp)?;
    let reports = evaluate_all(exp, &data, &ck.network, &exp.out_dir)?;
    write_eval_csv(&reports, &exp.out_dir.join("eval.csv"))?;
    Ok(reports)
}

pub const ABLATION: [Algorithm; 2] = [Algorithm::ProxGradient, Algorithm::PriorOnly];
pub const COMPARISON: [Algorithm; 4] = [
    Algorithm::ProxGradient,
    Algorithm::Admm,
    Algorithm::Ladmm,
    Algorithm::GradientDescent,
];

/// `odp ablate`: proximal gradient against the prior-only network.
pub fn cmd_ablate(exp: &Experiment) -> Result<Vec<ComparisonRow>> {
    let data = start(exp)?;
    let outcomes = run_algorithms(exp, &data, &ABLATION)?;
    let rows = comparison_rows(exp, &outcomes, &ABLATION)?;
    write_comparison_csv(&rows, &exp.out_dir.join("ablation.csv"))?;
    Ok(rows)
}

/// `odp compare-algs`: the four unrolled algorithms.
pub fn cmd_compare_algs(exp: &Experiment) -> Result<Vec<ComparisonRow>> {
    let data = start(exp)?;
    let outcomes = run_algorithms(exp, &data, &COMPARISON)?;
    let rows = comparison_rows(exp, &outcomes, &COMPARISON)?;
    write_comparison_csv(&rows, &exp.out_dir.join("compare.csv"))?;
    Ok(rows)
}

/// Train every algorithm needed by both tables once and return both.
pub fn run_full_matrix(exp: &Experiment) -> Result<(Vec<ModelOutcome>, Vec<ComparisonRow>, Vec<ComparisonRow>)> {
    let data = start(exp)?;
    let algs = [
        Algorithm::ProxGradient,
        Algorithm::PriorOnly,
        Algorithm::Admm,
        Algorithm::Ladmm,
        Algorithm::GradientDescent,
    ];
    let outcomes = run_algorithms(exp, &data, &algs)?;
    let ablation = comparison_rows(exp, &outcomes, &ABLATION)?;
    let compare = comparison_rows(exp, &outcomes, &COMPARISON)?;
    write_comparison_csv(&ablation, &exp.out_dir.join("ablation.csv"))?;
    write_comparison_csv(&compare, &exp.out_dir.join("compare.csv"))?;
    Ok((outcomes, ablation, compare))
}
