//! Oracle-guided prompt evolution for promptable segmentation models.
//!
//! Given an image and a click prompt, a promptable segmenter produces a mask
//! and a learned regressor estimates that mask's Dice without ground truth.
//! The prompt is then moved by gradient ascent on the estimated Dice, and the
//! best-scoring visited prompt is returned.
//!
//! Modules, bottom-up:
//!
//! * [`field`]: grids, masks, prompts, Dice, bilinear sampling, exact signed
//!   distance transforms, centroids and Pearson correlation.
//! * [`phantom`]: seeded synthetic chest-like phantoms and PGM files.
//! * [`segmenter`]: the segmenter contract and a differentiable reference model.
//! * [`oracle`]: candidate masks, the convolutional quality regressor and its trainer.
//! * [`evolve`]: the prompt ascent loop.

pub mod error;
pub mod evolve;
pub mod field;
pub mod optim;
pub mod oracle;
pub mod phantom;
pub mod segmenter;

pub use error::{Error, Result};
pub use evolve::{
    adam_ascent_step, evolve, evolve_with, initial_prompt, score_and_grad, score_and_grad_with, AdamState,
    EvolveConfig, Trajectory, TrajectoryRecord,
};
pub use field::{bilinear_sample, centroid, dice, pearson, signed_distance_transform, BinaryMask, Grid, Prompt};
pub use oracle::{RegressorParams, TrainingConfig};
pub use phantom::{generate_phantom, make_dataset, Dataset, PhantomSpec, Sample};
pub use segmenter::{PromptableSegmenter, ReferenceSegmenter, SegmenterConfig};
