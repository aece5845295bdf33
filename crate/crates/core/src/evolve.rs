//! Prompt evolution: gradient ascent of the oracle score with respect to the
//! prompt position, holding segmenter and oracle fixed, returning the visited
//! prompt with the highest score.

use crate::error::{Error, Result};
use crate::field::{centroid, dice, BinaryMask, Grid, Prompt};
use crate::oracle::{regressor_backward, regressor_forward, Mode, RegressorParams};
use crate::optim::{adam_update, AdamHyper};
use crate::segmenter::{sharpen, PromptableSegmenter, ReferenceSegmenter, SegmenterConfig, DEFAULT_SHARPEN};

/// Default prompt step size in pixels at the 64x64 desk scale.
///
/// Adam's first step moves every coordinate by about `lr` whatever the
/// gradient magnitude, so the step has to be small against the target; a
/// 10-pixel step leaves an 8-pixel-wide lung on the first iteration.
pub const DEFAULT_PROMPT_LR: f64 = 1.0;
pub const DEFAULT_ITERATIONS: usize = 50;

/// Adam moments for a 2D prompt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamState {
    pub m: [f64; 2],
    pub v: [f64; 2],
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(hyper: AdamHyper) -> Self {
        Self {
            m: [0.0; 2],
            v: [0.0; 2],
            t: 0,
            hyper,
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(AdamHyper::with_lr(DEFAULT_PROMPT_LR))
    }
}

/// One Adam ascent step on the prompt position followed by clamping to
/// `[margin, width-1-margin] x [margin, height-1-margin]`.
pub fn adam_ascent_step(
    state: &AdamState,
    p: &Prompt,
    grad: [f64; 2],
    width: usize,
    height: usize,
    margin: f64,
) -> Result<(AdamState, Prompt)> {
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("prompt gradient"));
    }
    let mut next = *state;
    next.t += 1;
    let mut xy = [p.x, p.y];
    adam_update(&mut xy, &grad, &mut next.m, &mut next.v, next.t, &state.hyper, 1.0);
    let moved = Prompt {
        x: xy[0],
        y: xy[1],
        foreground: p.foreground,
    };
    Ok((next, moved.clamped(width, height, margin)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveConfig {
    pub iterations: usize,
    /// Slope applied to segmenter logits before scoring.
    pub sharpen: f64,
    pub clamp_margin: f64,
    pub segmenter: SegmenterConfig,
    pub adam: AdamHyper,
    /// End the run (keeping the best prompt so far) on a non-finite score or
    /// gradient instead of returning an error.
    pub stop_on_non_finite: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            sharpen: DEFAULT_SHARPEN,
            clamp_margin: 0.0,
            segmenter: SegmenterConfig::default(),
            adam: AdamHyper::with_lr(DEFAULT_PROMPT_LR),
            stop_on_non_finite: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("evolution needs at least one iteration".into()));
        }
        if !(self.sharpen > 0.0) || !(self.adam.lr > 0.0) || !(self.clamp_margin >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid evolution settings: {self:?}")));
        }
        self.segmenter.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub prompt: Prompt,
    pub score: f64,
    /// True Dice of the scored mask; evaluation only, never used for updates.
    pub dice: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    /// Index of the highest-scoring record (earliest on ties).
    pub best: usize,
    /// Set when the run ended early on a non-finite score or gradient.
    pub non_finite: bool,
}

impl Trajectory {
    pub fn best_record(&self) -> &TrajectoryRecord {
        &self.records[self.best]
    }

    pub fn initial(&self) -> &TrajectoryRecord {
        &self.records[0]
    }
}

/// Oracle score of a prompt, its gradient, and the mask that was scored.
#[derive(Clone, Debug)]
pub struct ScoredPrompt {
    pub score: f64,
    pub grad: [f64; 2],
    pub mask: Grid,
}

/// Score and prompt gradient through any segmenter implementing the contract.
pub fn score_and_grad_with<S: PromptableSegmenter + ?Sized>(
    segmenter: &S,
    image: &Grid,
    p: &Prompt,
    k: f64,
    params: &RegressorParams,
) -> Result<ScoredPrompt> {
    let seg = segmenter.segment(image, p)?;
    let mask = sharpen(&seg.logits, k)?;
    let (score, cache) = regressor_forward(params, image, &mask, Mode::Eval)?;
    let back = regressor_backward(params, &cache, &[1.0])?;
    let grad = segmenter.prompt_vjp(image, p, k, &back.mask_grads[0])?;
    Ok(ScoredPrompt { score, grad, mask })
}

/// Oracle score of the sharpened reference segmentation at `p` and its exact
/// gradient with respect to `p`.
pub fn score_and_grad(
    image: &Grid,
    p: &Prompt,
    cfg: &SegmenterConfig,
    k: f64,
    params: &RegressorParams,
) -> Result<(f64, [f64; 2])> {
    let s = score_and_grad_with(&ReferenceSegmenter::new(*cfg), image, p, k, params)?;
    Ok((s.score, s.grad))
}

/// Evolves `p0` with the reference segmenter.
pub fn evolve(
    image: &Grid,
    p0: &Prompt,
    cfg: &EvolveConfig,
    params: &RegressorParams,
    gt: Option<&BinaryMask>,
) -> Result<(Prompt, Trajectory)> {
    evolve_with(&ReferenceSegmenter::new(cfg.segmenter), image, p0, cfg, params, gt)
}

/// Runs up to `cfg.iterations` ascent steps from `p0` and returns the visited
/// prompt with the highest oracle score, which is never below the score at `p0`.
pub fn evolve_with<S: PromptableSegmenter + ?Sized>(
    segmenter: &S,
    image: &Grid,
    p0: &Prompt,
    cfg: &EvolveConfig,
    params: &RegressorParams,
    gt: Option<&BinaryMask>,
) -> Result<(Prompt, Trajectory)> {
    cfg.validate()?;
    p0.check_bounds(image.width(), image.height())?;
    if let Some(gt) = gt {
        image.check_shape(gt.as_grid())?;
    }

    let (w, h) = (image.width(), image.height());
    let mut state = AdamState::new(cfg.adam);
    let mut p = *p0;
    let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(cfg.iterations + 1);
    let mut best = 0usize;
    let mut non_finite = false;

    for iteration in 0..=cfg.iterations {
        let scored = score_and_grad_with(segmenter, image, &p, cfg.sharpen, params)?;
        if !scored.score.is_finite() {
            if records.is_empty() || !cfg.stop_on_non_finite {
                return Err(Error::NonFinite("oracle score"));
            }
            non_finite = true;
            break;
        }
        let true_dice = gt.map(|g| dice(&scored.mask, g.as_grid())).transpose()?;
        records.push(TrajectoryRecord {
            iteration,
            prompt: p,
            score: scored.score,
            dice: true_dice,
        });
        if scored.score > records[best].score {
            best = records.len() - 1;
        }
        if iteration == cfg.iterations {
            break;
        }
        match adam_ascent_step(&state, &p, scored.grad, w, h, cfg.clamp_margin) {
            Ok((s, q)) => {
                state = s;
                p = q;
            }
            Err(Error::NonFinite(_)) if cfg.stop_on_non_finite => {
                non_finite = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let trajectory = Trajectory {
        records,
        best,
        non_finite,
    };
    Ok((trajectory.best_record().prompt, trajectory))
}

/// The ground-truth centroid, moved to the nearest foreground pixel when the
/// centroid's own pixel is background.
pub fn initial_prompt(gt: &BinaryMask) -> Result<Prompt> {
    let c = centroid(gt)?;
    let (px, py) = c.pixel();
    if gt.is_foreground(px.min(gt.width() - 1), py.min(gt.height() - 1)) {
        return Ok(c);
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for (col, row) in gt.foreground() {
        let d = (col as f64 - c.x).powi(2) + (row as f64 - c.y).powi(2);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some(((col, row), d));
        }
    }
    let ((col, row), _) = best.ok_or(Error::DegenerateMask("empty ground truth"))?;
    Ok(Prompt::new(col as f64, row as f64))
}
