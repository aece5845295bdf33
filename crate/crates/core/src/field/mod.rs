//! Scalar fields on a pixel grid and the geometric and statistical
//! primitives built on them.

mod distance;
mod grid;
mod sample;
mod stats;

pub use distance::signed_distance_transform;
pub use grid::{BinaryMask, Grid, Prompt};
pub use sample::bilinear_sample;
pub use stats::{centroid, dice, pearson, DICE_EPS};

