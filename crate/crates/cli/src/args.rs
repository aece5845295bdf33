//! Command-line flags. Every flag struct is also serializable so that a run
//! manifest records the complete, resolved flag set.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PROMPTEVO_OUT";

#[derive(Parser, Debug)]
#[command(name = "promptevo", version, about = "Oracle-guided prompt evolution on synthetic chest phantoms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate a phantom dataset (PGM images, masks and a CSV manifest).
    Phantom(PhantomArgs),
    /// Build candidate sets and train the quality regressor.
    Train(TrainArgs),
    /// Sweep the prompt over the ground truth and record Dice and score.
    Heatmap(HeatmapArgs),
    /// Evolve prompts and write one trajectory per image.
    Evolve(EvolveArgs),
    /// Compare initial and evolved Dice over a split.
    Evaluate(EvaluateArgs),
    /// Re-run a command from its manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Phantom(_) => "phantom",
            Self::Train(_) => "train",
            Self::Heatmap(_) => "heatmap",
            Self::Evolve(_) => "evolve",
            Self::Evaluate(_) => "evaluate",
            Self::Replay(_) => "replay",
        }
    }

    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Self::Phantom(a) => a.out.as_ref(),
            Self::Train(a) => a.out.as_ref(),
            Self::Heatmap(a) => a.out.as_ref(),
            Self::Evolve(a) => a.out.as_ref(),
            Self::Evaluate(a) => a.out.as_ref(),
            Self::Replay(a) => a.out.as_ref(),
        }
    }

    pub fn out_mut(&mut self) -> &mut Option<PathBuf> {
        match self {
            Self::Phantom(a) => &mut a.out,
            Self::Train(a) => &mut a.out,
            Self::Heatmap(a) => &mut a.out,
            Self::Evolve(a) => &mut a.out,
            Self::Evaluate(a) => &mut a.out,
            Self::Replay(a) => &mut a.out,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Phantom(a) => Some(a.seed),
            Self::Train(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 40)]
    pub train: usize,
    #[arg(long, default_value_t = 20)]
    pub val: usize,
    #[arg(long, default_value_t = 50)]
    pub test: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Additive rib stripe brightness.
    #[arg(long)]
    pub rib_amplitude: Option<f64>,
    /// Pixels per rib stripe cycle.
    #[arg(long)]
    pub rib_period: Option<f64>,
    #[arg(long)]
    pub pathology_probability: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Output directory [default: $PROMPTEVO_OUT/phantom or runs/phantom].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Shared segmenter and sharpening flags.
#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SegmenterArgs {
    /// Logit gain.
    #[arg(long, default_value_t = 10.0)]
    pub kappa: f64,
    /// Acceptance threshold.
    #[arg(long, default_value_t = 0.3)]
    pub tau: f64,
    /// Intensity penalty weight.
    #[arg(long, default_value_t = 4.0)]
    pub lambda_i: f64,
    /// Radial penalty weight.
    #[arg(long, default_value_t = 4.0)]
    pub lambda_r: f64,
    /// Sharpening slope applied to segmenter logits.
    #[arg(long, default_value_t = 10.0)]
    pub k: f64,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct TrainArgs {
    /// Dataset directory written by `phantom`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this many epochs without a new best validation loss.
    #[arg(long)]
    pub patience: Option<usize>,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    /// Weight file to write [default: <out>/weights.spot].
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Which samples a command works on.
#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sample ids; overrides --split when given.
    #[arg(long = "id")]
    pub ids: Vec<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Use only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    /// Grid spacing of the prompt sweep in pixels.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Regressor weights; the score column is left blank without them.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Prompt optimizer flags.
#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct AscentArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = promptevo::evolve::DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Prompt step size in pixels.
    #[arg(long, default_value_t = promptevo::evolve::DEFAULT_PROMPT_LR)]
    pub lr: f64,
    /// Keep prompts this many pixels inside the image border.
    #[arg(long, default_value_t = 0.0)]
    pub margin: f64,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    #[command(flatten)]
    pub ascent: AscentArgs,
    /// Also write the scored mask of every step as a PGM.
    #[arg(long)]
    pub dump_masks: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    #[command(flatten)]
    pub ascent: AscentArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
