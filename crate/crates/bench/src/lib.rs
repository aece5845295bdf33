//! Fixtures shared by the benchmarks.

use promptevo::{generate_phantom, initial_prompt, PhantomSpec, Prompt, RegressorParams, Sample};

/// A default 64x64 phantom, its centroid prompt and freshly initialized
/// regressor weights.
pub fn fixture(seed: u64) -> (Sample, Prompt, RegressorParams) {
    let sample = generate_phantom(&PhantomSpec::default(), seed).expect("default phantom");
    let p0 = initial_prompt(&sample.gt).expect("non-empty ground truth");
    (sample, p0, RegressorParams::init(seed))
}
