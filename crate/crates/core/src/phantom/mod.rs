//! Synthetic chest-like phantoms with a known target mask.
//!
//! Every phantom is a bright background with two dark elliptical "lungs",
//! horizontal sinusoidal rib stripes drawn across the whole image, an
//! optional bright lesion inside the target lung and clipped Gaussian noise.
//! The target lung's exact rasterization is the ground truth.
//!
//! Randomness comes from ChaCha8 seeded through `seed_from_u64`, whose output
//! stream is fixed by the algorithm and therefore identical on every platform.

mod pgm;

pub use pgm::{load_mask_pgm, load_pgm, save_mask_pgm, save_pgm};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{BinaryMask, Grid};

/// Smallest and largest admissible ground-truth foreground fractions.
pub const MIN_GT_FRACTION: f64 = 0.02;
pub const MAX_GT_FRACTION: f64 = 0.60;

/// Generation parameters. Geometry is given as fractions of the image size.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub lung_intensity: f64,
    pub background_intensity: f64,
    pub rib_amplitude: f64,
    /// Pixels per stripe cycle.
    pub rib_period: f64,
    pub pathology_probability: f64,
    /// Brightness added by a lesion.
    pub pathology_intensity: f64,
    /// Lesion radius range as a fraction of the target lung's short semi-axis.
    pub pathology_radius: (f64, f64),
    pub noise_sigma: f64,
    /// Target lung center `(x, y)`; the other lung is mirrored about the vertical midline.
    pub lung_center: (f64, f64),
    /// Semi-axes `(a_x, a_y)`.
    pub lung_axes: (f64, f64),
    /// Uniform jitter half-width applied to each center coordinate.
    pub center_jitter: f64,
    /// Relative jitter half-width applied to each semi-axis.
    pub axes_jitter: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            lung_intensity: 0.25,
            background_intensity: 0.75,
            rib_amplitude: 0.4,
            rib_period: 12.0,
            pathology_probability: 0.5,
            pathology_intensity: 0.45,
            pathology_radius: (0.35, 0.6),
            noise_sigma: 0.02,
            lung_center: (0.3, 0.5),
            lung_axes: (0.13, 0.32),
            center_jitter: 0.04,
            axes_jitter: 0.15,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("phantom spec: {msg}")));
        if self.width < 8 || self.height < 8 {
            return bad("images must be at least 8x8");
        }
        for (name, v) in [
            ("lung_intensity", self.lung_intensity),
            ("background_intensity", self.background_intensity),
            ("rib_amplitude", self.rib_amplitude),
            ("pathology_intensity", self.pathology_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.rib_period >= 2.0) {
            return bad("rib_period must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.pathology_probability) {
            return bad("pathology_probability must lie in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        let (r0, r1) = self.pathology_radius;
        if !(r0 > 0.0 && r0 <= r1 && r1 < 1.0) {
            return bad("pathology_radius must satisfy 0 < lo <= hi < 1");
        }
        if !(self.lung_axes.0 > 0.0 && self.lung_axes.1 > 0.0) {
            return bad("lung axes must be positive");
        }
        if !(0.0..1.0).contains(&self.axes_jitter) || self.center_jitter < 0.0 {
            return bad("jitter out of range");
        }
        Ok(())
    }
}

/// An image with its ground-truth target mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Grid,
    pub gt: BinaryMask,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Grid, gt: BinaryMask) -> Result<Self> {
        image.check_shape(gt.as_grid())?;
        let frac = gt.fraction();
        if gt.count() == 0 || !(MIN_GT_FRACTION..=MAX_GT_FRACTION).contains(&frac) {
            return Err(Error::DegenerateMask("ground truth covers too little or too much of the image"));
        }
        Ok(Self {
            id: id.into(),
            image,
            gt,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
}

impl Ellipse {
    fn contains(&self, col: usize, row: usize) -> bool {
        let u = (col as f64 - self.cx) / self.ax;
        let v = (row as f64 - self.cy) / self.ay;
        u * u + v * v <= 1.0
    }
}

/// Renders one phantom. Deterministic in `(spec, seed)`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<Sample> {
    generate_with_id(spec, seed, format!("phantom-{seed}"))
}

fn generate_with_id(spec: &PhantomSpec, seed: u64, id: String) -> Result<Sample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as f64, spec.height as f64);

    let mut jitter = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let cx = (spec.lung_center.0 + jitter(spec.center_jitter)) * w;
    let cy = (spec.lung_center.1 + jitter(spec.center_jitter)) * h;
    let ax = spec.lung_axes.0 * (1.0 + jitter(spec.axes_jitter)) * w;
    let ay = spec.lung_axes.1 * (1.0 + jitter(spec.axes_jitter)) * h;
    let target = Ellipse { cx, cy, ax, ay };

    let other = Ellipse {
        cx: (w - 1.0) - ((spec.lung_center.0 + jitter(spec.center_jitter)) * w),
        cy: (spec.lung_center.1 + jitter(spec.center_jitter)) * h,
        ax: spec.lung_axes.0 * (1.0 + jitter(spec.axes_jitter)) * w,
        ay: spec.lung_axes.1 * (1.0 + jitter(spec.axes_jitter)) * h,
    };

    let rib_phase = rng.random_range(0.0..2.0 * PI);

    let gt = BinaryMask::from_fn(spec.width, spec.height, |c, r| target.contains(c, r))?;
    if gt.count() == 0 {
        return Err(Error::DegenerateMask("target ellipse rasterizes to nothing"));
    }

    // lesion center drawn from the ground-truth pixels, radius relative to the short axis
    let lesion = if rng.random_bool(spec.pathology_probability) {
        let pixels: Vec<(usize, usize)> = gt.foreground().collect();
        let (lc, lr) = pixels[rng.random_range(0..pixels.len())];
        let (r0, r1) = spec.pathology_radius;
        let radius = rng.random_range(r0..=r1) * target.ax.min(target.ay);
        Some((lc as f64, lr as f64, radius))
    } else {
        None
    };

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let image = Grid::from_fn(spec.width, spec.height, |c, r| {
        let mut v = if gt.is_foreground(c, r) || other.contains(c, r) {
            spec.lung_intensity
        } else {
            spec.background_intensity
        };
        v += spec.rib_amplitude * 0.5 * (1.0 + (2.0 * PI * r as f64 / spec.rib_period + rib_phase).sin());
        if let Some((lc, lr, rad)) = lesion {
            let (dx, dy) = (c as f64 - lc, r as f64 - lr);
            if dx * dx + dy * dy <= rad * rad && gt.is_foreground(c, r) {
                v += spec.pathology_intensity;
            }
        }
        if spec.noise_sigma > 0.0 {
            v += noise.sample(&mut rng);
        }
        v.clamp(0.0, 1.0)
    })?;

    Sample::new(id, image, gt)
}

/// Train/validation/test splits of independently seeded phantoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Seed of the `index`-th sample of a dataset built from `seed`.
///
/// Indices run over the concatenated splits, so seeds within one dataset are
/// pairwise distinct.
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(1 << 32).wrapping_add(index)
}

pub fn make_dataset(spec: &PhantomSpec, n_train: usize, n_val: usize, n_test: usize, seed: u64) -> Result<Dataset> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidConfig("every split needs at least one sample".into()));
    }
    let mut index = 0u64;
    let mut split = |name: &str, n: usize| -> Result<Vec<Sample>> {
        (0..n)
            .map(|i| {
                let s = sample_seed(seed, index);
                index += 1;
                generate_with_id(spec, s, format!("{name}-{i:04}"))
            })
            .collect()
    };
    let train = split("train", n_train)?;
    let val = split("val", n_val)?;
    let test = split("test", n_test)?;
    Ok(Dataset { train, val, test })
}
