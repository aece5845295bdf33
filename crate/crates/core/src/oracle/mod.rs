//! The learned segmentation-quality oracle: candidate generation, the
//! convolutional regressor, its training loop and weight files.

pub mod candidates;
pub mod io;
pub mod network;
pub mod train;

pub use candidates::{
    band_prompts, build_candidate_set, build_candidates, levelset_perturb, outside_prompts, recompute_dice, Candidate,
    CandidateRecipe, CandidateSet, CandidateSource, DEFAULT_DELTAS, DEFAULT_OUTSIDE_OFFSET,
};
pub use io::{decode_params, encode_params, load_params, save_params};
pub use network::{
    regressor_backward, regressor_forward, regressor_forward_batch, Backward, ForwardCache, Input, Mode, ParamGrads,
    RegressorParams, CHANNEL_PLAN, KERNEL, LEAKY_SLOPE, NORM_EPS, NORM_MOMENTUM, PARAM_COUNT, STRIDES,
};
pub use train::{evaluate_mse, predict, train_regressor, train_regressor_with, EpochRecord, TrainingConfig, TrainingOutcome};
