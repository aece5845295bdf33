use std::path::Path;

use promptevo::{evolve, initial_prompt, pearson, EvolveConfig, RegressorParams, Sample};
use rayon::prelude::*;

use super::{evolve_config, load_weights, num, select_samples, with_pool, write_csv};
use crate::args::EvaluateArgs;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRow {
    pub id: String,
    pub dice_initial: f64,
    pub dice_evolved: f64,
    pub score_initial: f64,
    pub score_evolved: f64,
}

fn evaluate_one(s: &Sample, cfg: &EvolveConfig, params: &RegressorParams) -> CliResult<EvaluationRow> {
    let p0 = initial_prompt(&s.gt)?;
    let (_, traj) = evolve(&s.image, &p0, cfg, params, Some(&s.gt))?;
    let (first, best) = (traj.initial(), traj.best_record());
    let missing = || CliError::Numerical(format!("{}: no dice recorded", s.id));
    Ok(EvaluationRow {
        id: s.id.clone(),
        dice_initial: first.dice.ok_or_else(missing)?,
        dice_evolved: best.dice.ok_or_else(missing)?,
        score_initial: first.score,
        score_evolved: best.score,
    })
}

/// Centroid-initialized evolution of every sample, sorted by id. Each image
/// is independent, so the result does not depend on `jobs`.
pub fn evaluate_samples(
    samples: &[Sample],
    cfg: &EvolveConfig,
    params: &RegressorParams,
    jobs: usize,
) -> CliResult<Vec<EvaluationRow>> {
    let mut rows = with_pool(jobs, || {
        samples
            .par_iter()
            .map(|s| evaluate_one(s, cfg, params))
            .collect::<CliResult<Vec<_>>>()
    })??;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(rows)
}

pub fn run(a: &EvaluateArgs, out: &Path) -> CliResult<()> {
    let cfg = evolve_config(&a.ascent)?;
    let params = load_weights(&a.ascent.weights)?;
    let samples = select_samples(&a.select)?;
    let rows = evaluate_samples(&samples, &cfg, &params, a.ascent.jobs)?;

    write_csv(
        &out.join("per_image.csv"),
        &["id", "dice_initial", "dice_evolved", "score_initial", "score_evolved"],
        rows.iter().map(|r| {
            vec![
                r.id.clone(),
                num(r.dice_initial),
                num(r.dice_evolved),
                num(r.score_initial),
                num(r.score_evolved),
            ]
        }),
    )?;

    let n = rows.len() as f64;
    let improved = rows.iter().filter(|r| r.dice_evolved > r.dice_initial).count();
    let fraction = improved as f64 / n;
    let mean_initial = rows.iter().map(|r| r.dice_initial).sum::<f64>() / n;
    let mean_evolved = rows.iter().map(|r| r.dice_evolved).sum::<f64>() / n;
    let scores: Vec<f64> = rows.iter().map(|r| r.score_evolved).collect();
    let dice: Vec<f64> = rows.iter().map(|r| r.dice_evolved).collect();
    // undefined for a single image or constant columns; left blank then
    let r = pearson(&scores, &dice).ok();
    write_csv(
        &out.join("summary.csv"),
        &["metric", "value"],
        [
            ("n", rows.len().to_string()),
            ("n_improved", improved.to_string()),
            ("fraction_improved", num(fraction)),
            ("mean_dice_initial", num(mean_initial)),
            ("mean_dice_evolved", num(mean_evolved)),
            ("pearson_score_dice", r.map(num).unwrap_or_default()),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v]),
    )?;
    println!("improved {improved}/{} ({fraction:.3})", rows.len());
    println!("mean dice {mean_initial:.4} -> {mean_evolved:.4}");
    if let Some(r) = r {
        println!("pearson(score, dice) on evolved masks = {r:.4}");
    }
    Ok(())
}
