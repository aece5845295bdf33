//! Training data for the quality regressor: perturbed copies of each ground
//! truth plus segmenter predictions from a fixed prompt recipe, each labeled
//! with its true Dice.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{dice, signed_distance_transform, BinaryMask, Grid, Prompt};
use crate::phantom::Sample;
use crate::segmenter::{segment, sharpen, SegmenterConfig, DEFAULT_SHARPEN};

/// Level-set offsets (pixels) used when none are given.
pub const DEFAULT_DELTAS: [f64; 8] = [-6.0, -4.0, -2.0, -1.0, 1.0, 2.0, 4.0, 6.0];

/// Minimum distance (pixels) of off-target prompts from the ground truth.
pub const DEFAULT_OUTSIDE_OFFSET: f64 = 5.0;

/// Thresholds the signed distance map of `gt` at `-delta`: positive offsets
/// dilate, negative offsets erode, zero returns `gt`.
pub fn levelset_perturb(gt: &BinaryMask, delta: f64) -> Result<BinaryMask> {
    let sdt = signed_distance_transform(gt)?;
    Ok(BinaryMask::threshold(&sdt.map(|d| if d > -delta { 1.0 } else { 0.0 }), 0.5))
}

/// Splits the foreground rows into three contiguous bands holding roughly a
/// third of the foreground pixels each and returns the band centroids.
pub fn band_prompts(gt: &BinaryMask) -> Result<[Prompt; 3]> {
    let (w, h) = (gt.width(), gt.height());
    let row_counts: Vec<usize> = (0..h).map(|r| (0..w).filter(|&c| gt.is_foreground(c, r)).count()).collect();
    let total: usize = row_counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateMask("band prompts need a nonempty mask"));
    }

    // a row joins the band containing the midpoint of its share of the cumulative count
    let mut band_of_row = vec![0usize; h];
    let mut before = 0usize;
    for (r, &n) in row_counts.iter().enumerate() {
        let mid = before as f64 + n as f64 / 2.0;
        band_of_row[r] = ((3.0 * mid / total as f64) as usize).min(2);
        before += n;
    }

    let mut sums = [(0.0f64, 0.0f64, 0usize); 3];
    for (c, r) in gt.foreground() {
        let s = &mut sums[band_of_row[r]];
        s.0 += c as f64;
        s.1 += r as f64;
        s.2 += 1;
    }
    if sums.iter().any(|s| s.2 == 0) {
        return Err(Error::DegenerateMask("mask cannot be split into three nonempty row bands"));
    }
    Ok(sums.map(|(sx, sy, n)| Prompt::new(sx / n as f64, sy / n as f64)))
}

/// Samples `n` distinct background pixels at least `offset` pixels from the
/// mask, uniformly and reproducibly from `seed`.
pub fn outside_prompts(gt: &BinaryMask, n: usize, offset: f64, seed: u64) -> Result<Vec<Prompt>> {
    let sdt = signed_distance_transform(gt)?;
    let w = gt.width();
    let eligible: Vec<usize> = sdt
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= -offset)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() || eligible.len() < n {
        return Err(Error::DegenerateMask("not enough background pixels far enough from the mask"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|k| {
            let i = eligible[k];
            Prompt::new((i % w) as f64, (i / w) as f64)
        })
        .collect())
}

/// Where a candidate mask came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CandidateSource {
    LevelSet { delta: f64 },
    BandPrompt { prompt: Prompt },
    OutsidePrompt { prompt: Prompt },
}

impl CandidateSource {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::LevelSet { .. } => "levelset",
            Self::BandPrompt { .. } => "band",
            Self::OutsidePrompt { .. } => "outside",
        }
    }

    /// The level-set offset or the prompt position, for audit files.
    pub fn detail(&self) -> String {
        match self {
            Self::LevelSet { delta } => format!("{delta}"),
            Self::BandPrompt { prompt } | Self::OutsidePrompt { prompt } => format!("{:.3};{:.3}", prompt.x, prompt.y),
        }
    }
}

impl fmt::Display for CandidateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.detail())
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub sample_id: String,
    pub source: CandidateSource,
    pub image: Arc<Grid>,
    pub gt: Arc<BinaryMask>,
    pub mask: Grid,
    pub dice: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn extend(&mut self, other: CandidateSet) {
        self.candidates.extend(other.candidates);
    }

    pub fn dice_values(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.dice).collect()
    }
}

/// How candidates are produced for each sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRecipe {
    pub deltas: Vec<f64>,
    pub band_prompts: bool,
    pub outside_prompts: usize,
    pub outside_offset: f64,
    pub segmenter: SegmenterConfig,
    /// Slope applied to segmenter logits, matching what the optimizer scores.
    pub sharpen: f64,
    pub seed: u64,
}

impl Default for CandidateRecipe {
    fn default() -> Self {
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            band_prompts: true,
            outside_prompts: 3,
            outside_offset: DEFAULT_OUTSIDE_OFFSET,
            segmenter: SegmenterConfig::default(),
            sharpen: DEFAULT_SHARPEN,
            seed: 0,
        }
    }
}

impl CandidateRecipe {
    /// Only level-set candidates.
    pub fn levelsets(deltas: &[f64]) -> Self {
        Self {
            deltas: deltas.to_vec(),
            band_prompts: false,
            outside_prompts: 0,
            ..Self::default()
        }
    }

    pub fn per_sample(&self) -> usize {
        self.deltas.len() + if self.band_prompts { 3 } else { 0 } + self.outside_prompts
    }
}

/// Builds the candidates for one sample.
///
/// `salt` distinguishes samples so that off-target prompts differ per image.
pub fn build_candidate_set(sample: &Sample, recipe: &CandidateRecipe, salt: u64) -> Result<CandidateSet> {
    let image = Arc::new(sample.image.clone());
    let gt = Arc::new(sample.gt.clone());
    let mut out = Vec::with_capacity(recipe.per_sample());
    let mut push = |source: CandidateSource, mask: Grid| -> Result<()> {
        let d = dice(&mask, gt.as_grid())?;
        out.push(Candidate {
            sample_id: sample.id.clone(),
            source,
            image: Arc::clone(&image),
            gt: Arc::clone(&gt),
            mask,
            dice: d,
        });
        Ok(())
    };

    for &delta in &recipe.deltas {
        let m = levelset_perturb(&sample.gt, delta)?;
        push(CandidateSource::LevelSet { delta }, m.into_grid())?;
    }

    let predict = |p: &Prompt| -> Result<Grid> {
        let seg = segment(&sample.image, p, &recipe.segmenter)?;
        sharpen(&seg.logits, recipe.sharpen)
    };
    if recipe.band_prompts {
        for prompt in band_prompts(&sample.gt)? {
            push(CandidateSource::BandPrompt { prompt }, predict(&prompt)?)?;
        }
    }
    if recipe.outside_prompts > 0 {
        let seed = recipe.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt);
        for prompt in outside_prompts(&sample.gt, recipe.outside_prompts, recipe.outside_offset, seed)? {
            push(CandidateSource::OutsidePrompt { prompt }, predict(&prompt)?)?;
        }
    }
    Ok(CandidateSet { candidates: out })
}

/// Candidates for every sample in order.
pub fn build_candidates(samples: &[Sample], recipe: &CandidateRecipe) -> Result<CandidateSet> {
    let mut set = CandidateSet::default();
    for (i, s) in samples.iter().enumerate() {
        set.extend(build_candidate_set(s, recipe, i as u64)?);
    }
    Ok(set)
}

/// Recomputes a candidate's Dice from its mask and ground truth.
pub fn recompute_dice(c: &Candidate) -> Result<f64> {
    dice(&c.mask, c.gt.as_grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};
    use rand::Rng;

    fn square(n: usize, lo: usize, hi: usize) -> BinaryMask {
        BinaryMask::from_fn(n, n, |c, r| (lo..hi).contains(&c) && (lo..hi).contains(&r)).unwrap()
    }

    /// Erosion by the 4-neighbour cross; out-of-image neighbours are ignored.
    fn brute_erode(m: &BinaryMask) -> BinaryMask {
        let (w, h) = (m.width() as i64, m.height() as i64);
        BinaryMask::from_fn(m.width(), m.height(), |c, r| {
            let (c, r) = (c as i64, r as i64);
            m.is_foreground(c as usize, r as usize)
                && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().all(|(dx, dy)| {
                    let (x, y) = (c + dx, r + dy);
                    !(0..w).contains(&x) || !(0..h).contains(&y) || m.is_foreground(x as usize, y as usize)
                })
        })
        .unwrap()
    }

    #[test]
    fn levelset_identity_and_saturation() {
        let m = square(8, 2, 6);
        assert_eq!(levelset_perturb(&m, 0.0).unwrap(), m);
        let full = levelset_perturb(&m, 8.0).unwrap();
        assert_eq!(full.count(), 64);
    }

    #[test]
    fn levelset_erodes_square() {
        let m = square(8, 2, 6);
        assert_eq!(levelset_perturb(&m, -1.0).unwrap(), square(8, 3, 5));
        assert_eq!(levelset_perturb(&m, -1.0).unwrap(), brute_erode(&m));
    }

    #[test]
    fn levelset_minus_one_is_cross_erosion_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let m = BinaryMask::from_fn(12, 12, |_, _| rng.random_bool(0.6)).unwrap();
            if m.count() == 0 || m.count() == 144 {
                continue;
            }
            assert_eq!(levelset_perturb(&m, -1.0).unwrap(), brute_erode(&m));
        }
    }

    #[test]
    fn levelset_is_monotone_in_delta() {
        let s = generate_phantom(&PhantomSpec::default(), 4).unwrap();
        let deltas = [-6.0, -4.0, -2.5, -1.0, 0.0, 0.5, 1.0, 3.0, 6.0];
        let masks: Vec<_> = deltas.iter().map(|&d| levelset_perturb(&s.gt, d).unwrap()).collect();
        for pair in masks.windows(2) {
            assert!(pair[0].is_subset_of(&pair[1]));
        }
    }

    #[test]
    fn levelset_propagates_degenerate_mask() {
        let empty = BinaryMask::from_fn(6, 6, |_, _| false).unwrap();
        assert!(levelset_perturb(&empty, 1.0).is_err());
    }

    #[test]
    fn band_prompts_on_square() {
        let m = square(12, 3, 9);
        let p = band_prompts(&m).unwrap();
        for q in &p {
            assert_eq!(q.x, 5.5);
        }
        // rows 3..9 split two rows per band
        assert_eq!(p.map(|q| q.y), [3.5, 5.5, 7.5]);
    }

    #[test]
    fn band_prompts_single_row_fails() {
        let m = BinaryMask::from_fn(10, 10, |c, r| r == 4 && c > 2).unwrap();
        assert!(band_prompts(&m).is_err());
    }

    #[test]
    fn band_prompts_inside_phantom_gt() {
        for seed in 0..10 {
            let s = generate_phantom(&PhantomSpec::default(), seed).unwrap();
            for p in band_prompts(&s.gt).unwrap() {
                let (c, r) = p.pixel();
                assert!(s.gt.is_foreground(c, r), "seed {seed}: {p:?}");
            }
        }
    }

    #[test]
    fn outside_prompts_are_far_distinct_and_reproducible() {
        let s = generate_phantom(&PhantomSpec::default(), 2).unwrap();
        let sdt = signed_distance_transform(&s.gt).unwrap();
        let a = outside_prompts(&s.gt, 3, 5.0, 17).unwrap();
        assert_eq!(a, outside_prompts(&s.gt, 3, 5.0, 17).unwrap());
        assert_eq!(a.len(), 3);
        for (i, p) in a.iter().enumerate() {
            let (c, r) = p.pixel();
            assert!(sdt.get(c, r) <= -5.0);
            for q in &a[i + 1..] {
                assert_ne!(p, q);
            }
        }
        let small = square(8, 1, 7);
        assert!(outside_prompts(&small, 1, 5.0, 0).is_err());
    }

    #[test]
    fn candidate_counts() {
        let s = generate_phantom(&PhantomSpec::default(), 3).unwrap();
        let only_gt = build_candidate_set(&s, &CandidateRecipe::levelsets(&[0.0]), 0).unwrap();
        assert_eq!(only_gt.len(), 1);
        assert!((only_gt.candidates[0].dice - 1.0).abs() < 1e-9);

        let recipe = CandidateRecipe {
            deltas: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            ..CandidateRecipe::default()
        };
        let set = build_candidate_set(&s, &recipe, 0).unwrap();
        assert_eq!(set.len(), 11);
        for c in &set.candidates {
            assert!((0.0..=1.0).contains(&c.dice));
            assert!((recompute_dice(c).unwrap() - c.dice).abs() < 1e-9);
        }
    }

    #[test]
    fn levelset_dice_decreases_with_offset_magnitude() {
        let s = generate_phantom(&PhantomSpec::default(), 8).unwrap();
        let set = build_candidate_set(&s, &CandidateRecipe::levelsets(&[0.0, 1.0, 2.0, 4.0, 6.0]), 0).unwrap();
        let up = set.dice_values();
        let set = build_candidate_set(&s, &CandidateRecipe::levelsets(&[0.0, -1.0, -2.0, -4.0, -6.0]), 0).unwrap();
        let down = set.dice_values();
        for seq in [up, down] {
            for pair in seq.windows(2) {
                assert!(pair[1] <= pair[0], "{seq:?}");
            }
        }
    }
}
