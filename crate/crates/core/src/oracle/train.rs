use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::candidates::CandidateSet;
use super::network::{regressor_backward, regressor_forward_batch, Input, Mode, RegressorParams};
use crate::error::{Error, Result};
use crate::optim::{adam_update, AdamHyper};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
    /// Batch size used for evaluation passes; does not affect results.
    pub eval_batch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            adam: AdamHyper::with_lr(1e-3),
            seed: 0,
            patience: None,
            eval_batch: 64,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch == 0 || !(self.adam.lr > 0.0) {
            return Err(Error::InvalidConfig(
                "training needs epochs >= 1, batch >= 1 and a positive learning rate".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    /// Snapshot with the lowest validation loss (possibly the initialization).
    pub params: RegressorParams,
    pub history: Vec<EpochRecord>,
    /// Epoch of the returned snapshot; 0 means the initialization.
    pub best_epoch: usize,
    pub initial_val_mse: f64,
    pub best_val_mse: f64,
}

/// Evaluation-mode scores for every candidate, in order.
pub fn predict(params: &RegressorParams, set: &CandidateSet, batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.candidates.chunks(batch.max(1)) {
        let inputs: Vec<Input<'_>> = chunk
            .iter()
            .map(|c| Input {
                image: &c.image,
                mask: &c.mask,
            })
            .collect();
        let (scores, _) = regressor_forward_batch(params, &inputs, Mode::Eval)?;
        out.extend(scores);
    }
    Ok(out)
}

/// Mean squared error between evaluation-mode scores and true Dice.
pub fn evaluate_mse(params: &RegressorParams, set: &CandidateSet, batch: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let scores = predict(params, set, batch)?;
    Ok(scores
        .iter()
        .zip(&set.candidates)
        .map(|(s, c)| (s - c.dice).powi(2))
        .sum::<f64>()
        / set.len() as f64)
}

/// Mini-batch Adam on the MSE between predicted score and true Dice,
/// keeping the parameters with the lowest validation loss.
pub fn train_regressor(train: &CandidateSet, val: &CandidateSet, cfg: &TrainingConfig) -> Result<TrainingOutcome> {
    train_regressor_with(train, val, cfg, |_| {})
}

/// [`train_regressor`] with a per-epoch callback.
pub fn train_regressor_with(
    train: &CandidateSet,
    val: &CandidateSet,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }

    let mut params = RegressorParams::init(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a1e);
    let initial_val_mse = evaluate_mse(&params, val, cfg.eval_batch)?;

    let mut best = params.clone();
    let mut best_val = initial_val_mse;
    let mut best_epoch = 0;

    let mut moments: Vec<(Vec<f64>, Vec<f64>)> = params
        .trainable_mut()
        .iter()
        .map(|t| (vec![0.0; t.len()], vec![0.0; t.len()]))
        .collect();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sq_err = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<Input<'_>> = chunk
                .iter()
                .map(|&i| Input {
                    image: &train.candidates[i].image,
                    mask: &train.candidates[i].mask,
                })
                .collect();
            let (scores, cache) = regressor_forward_batch(&params, &inputs, Mode::Train)?;
            let n = chunk.len() as f64;
            let upstream: Vec<f64> = scores
                .iter()
                .zip(chunk)
                .map(|(s, &i)| {
                    let e = s - train.candidates[i].dice;
                    sq_err += e * e;
                    2.0 * e / n
                })
                .collect();
            let back = regressor_backward(&params, &cache, &upstream)?;
            if !back.params.is_finite() {
                return Err(Error::NonFinite("regressor gradient"));
            }
            params.update_running_stats(&cache)?;
            step += 1;
            for ((tensor, grad), (m, v)) in params
                .trainable_mut()
                .into_iter()
                .zip(back.params.tensors())
                .zip(moments.iter_mut())
            {
                adam_update(tensor, grad, m, v, step, &cfg.adam, -1.0);
            }
        }

        let record = EpochRecord {
            epoch,
            train_mse: sq_err / train.len() as f64,
            val_mse: evaluate_mse(&params, val, cfg.eval_batch)?,
        };
        if !record.val_mse.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        on_epoch(&record);
        history.push(record);
        if record.val_mse < best_val {
            best_val = record.val_mse;
            best = params.clone();
            best_epoch = epoch;
        } else if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }

    Ok(TrainingOutcome {
        params: best,
        history,
        best_epoch,
        initial_val_mse,
        best_val_mse: best_val,
    })
}
