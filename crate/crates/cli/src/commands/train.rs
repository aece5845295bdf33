use std::path::Path;

use promptevo::oracle::{build_candidates, evaluate_mse, predict, save_params, train_regressor_with, CandidateRecipe, CandidateSet};
use promptevo::optim::AdamHyper;
use promptevo::{pearson, TrainingConfig};

use super::{num, segmenter_config, write_csv};
use crate::args::TrainArgs;
use crate::dataset::load_dataset;
use crate::error::{CliError, CliResult};

const CANDIDATE_HEADER: [&str; 4] = ["sample_id", "source", "delta_or_prompt", "dice"];

fn candidate_rows(set: &CandidateSet) -> impl Iterator<Item = Vec<String>> + '_ {
    set.candidates
        .iter()
        .map(|c| vec![c.sample_id.clone(), c.source.kind().to_string(), c.source.detail(), num(c.dice)])
}

pub fn run(a: &TrainArgs, out: &Path) -> CliResult<()> {
    let cfg = TrainingConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamHyper::with_lr(a.lr),
        seed: a.seed,
        patience: a.patience,
        ..TrainingConfig::default()
    };
    cfg.validate()?;
    if a.patience == Some(0) {
        return Err(CliError::usage("--patience must be at least 1"));
    }
    let recipe = CandidateRecipe {
        segmenter: segmenter_config(&a.segmenter)?,
        sharpen: a.segmenter.k,
        seed: a.seed,
        ..CandidateRecipe::default()
    };

    let data = load_dataset(&a.data)?;
    let train = build_candidates(&data.train, &recipe)?;
    let val = build_candidates(&data.val, &recipe)?;
    let test = build_candidates(&data.test, &recipe)?;
    for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
        write_csv(&out.join(format!("candidates_{name}.csv")), &CANDIDATE_HEADER, candidate_rows(set))?;
    }

    let outcome = train_regressor_with(&train, &val, &cfg, |r| {
        eprintln!("epoch {:>4}  train_mse {:.6}  val_mse {:.6}", r.epoch, r.train_mse, r.val_mse);
    })?;
    write_csv(
        &out.join("loss.csv"),
        &["epoch", "train_mse", "val_mse"],
        outcome
            .history
            .iter()
            .map(|r| vec![r.epoch.to_string(), num(r.train_mse), num(r.val_mse)]),
    )?;

    let weights = a.weights_out.clone().unwrap_or_else(|| out.join("weights.spot"));
    save_params(&outcome.params, &weights)?;

    let scores = predict(&outcome.params, &test, cfg.eval_batch)?;
    let dice = test.dice_values();
    let r = pearson(&scores, &dice)?;
    let test_mse = evaluate_mse(&outcome.params, &test, cfg.eval_batch)?;
    write_csv(
        &out.join("predictions_test.csv"),
        &["sample_id", "source", "delta_or_prompt", "dice", "score"],
        candidate_rows(&test).zip(&scores).map(|(mut row, &s)| {
            row.push(num(s));
            row
        }),
    )?;
    write_csv(
        &out.join("summary.csv"),
        &["metric", "value"],
        [
            ("candidates_train", train.len().to_string()),
            ("candidates_val", val.len().to_string()),
            ("candidates_test", test.len().to_string()),
            ("epochs_run", outcome.history.len().to_string()),
            ("best_epoch", outcome.best_epoch.to_string()),
            ("initial_val_mse", num(outcome.initial_val_mse)),
            ("best_val_mse", num(outcome.best_val_mse)),
            ("test_mse", num(test_mse)),
            ("pearson_test", num(r)),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v]),
    )?;
    println!("held-out pearson r = {r:.4} over {} test candidates", test.len());
    println!("weights written to {}", weights.display());
    Ok(())
}
