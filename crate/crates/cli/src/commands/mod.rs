mod evaluate;
mod evolve;
mod heatmap;
mod phantom;
mod train;

use std::fs;
use std::path::Path;

use promptevo::oracle::load_params;
use promptevo::optim::AdamHyper;
use promptevo::{EvolveConfig, RegressorParams, Sample, SegmenterConfig};

use crate::args::{AscentArgs, Command, SegmenterArgs, SelectArgs};
use crate::dataset::{load_ids, load_split};
use crate::error::{CliError, CliResult, Context};

pub use evaluate::{evaluate_samples, EvaluationRow};

/// Runs a resolved command, writing its outputs under `out`.
pub fn dispatch(cmd: &Command, out: &Path) -> CliResult<()> {
    match cmd {
        Command::Phantom(a) => phantom::run(a, out),
        Command::Train(a) => train::run(a, out),
        Command::Heatmap(a) => heatmap::run(a, out),
        Command::Evolve(a) => evolve::run(a, out),
        Command::Evaluate(a) => evaluate::run(a, out),
        Command::Replay(_) => Err(CliError::usage("replay cannot be nested")),
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).context(path.display())?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().context(path.display())
}

pub(crate) fn segmenter_config(a: &SegmenterArgs) -> CliResult<SegmenterConfig> {
    let cfg = SegmenterConfig {
        kappa: a.kappa,
        tau: a.tau,
        lambda_i: a.lambda_i,
        lambda_r: a.lambda_r,
    };
    cfg.validate()?;
    if !(a.k > 0.0) {
        return Err(CliError::usage("--k must be positive"));
    }
    Ok(cfg)
}

pub(crate) fn evolve_config(a: &AscentArgs) -> CliResult<EvolveConfig> {
    let cfg = EvolveConfig {
        iterations: a.iters,
        sharpen: a.segmenter.k,
        clamp_margin: a.margin,
        segmenter: segmenter_config(&a.segmenter)?,
        adam: AdamHyper::with_lr(a.lr),
        stop_on_non_finite: false,
    };
    cfg.validate()?;
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    Ok(cfg)
}

pub(crate) fn load_weights(path: &Path) -> CliResult<RegressorParams> {
    if !path.is_file() {
        return Err(CliError::data(format!("weights file {} not found", path.display())));
    }
    load_params(path).context(path.display())
}

pub(crate) fn select_samples(a: &SelectArgs) -> CliResult<Vec<Sample>> {
    let mut samples = if a.ids.is_empty() {
        load_split(&a.data, &a.split)?
    } else {
        load_ids(&a.data, &a.ids)?
    };
    if let Some(n) = a.limit {
        samples.truncate(n);
    }
    if samples.is_empty() {
        return Err(CliError::data(format!("split {:?} selects no samples", a.split)));
    }
    Ok(samples)
}

/// Runs `f` on a pool of `jobs` threads. Results keep the input order.
pub(crate) fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if jobs == 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).context(dir.display())
}
