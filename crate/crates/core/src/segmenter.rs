//! Promptable segmentation: the segmenter contract and a differentiable
//! analytic reference implementation.
//!
//! The reference segmenter scores pixel `i` (center `(u, v)`, intensity `I`)
//! against a prompt `p = (x, y)` with the logit
//!
//! ```text
//! z = kappa * (tau - lambda_i * (I - a(p))^2 - lambda_r * r^2)
//! a(p) = bilinear image intensity at p
//! r    = |(u, v) - (x, y)| / max(width, height)
//! ```
//!
//! so a pixel joins the mask when it looks like the prompted spot and lies
//! near it. The mask is `logistic(z)`.

use crate::error::{Error, Result};
use crate::field::{bilinear_sample, Grid, Prompt};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmenterConfig {
    /// Logit scale.
    pub kappa: f64,
    /// Affinity offset.
    pub tau: f64,
    /// Weight of squared intensity dissimilarity.
    pub lambda_i: f64,
    /// Weight of squared normalized radius.
    pub lambda_r: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            tau: 0.3,
            lambda_i: 4.0,
            lambda_r: 4.0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.tau.is_finite() || !(self.lambda_i >= 0.0) || !(self.lambda_r >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "segmenter needs kappa > 0 and non-negative weights, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Default slope applied by [`sharpen`] before scoring.
pub const DEFAULT_SHARPEN: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationOutput {
    pub logits: Grid,
    /// `logistic(logits)`.
    pub mask: Grid,
    /// Image intensity sampled at the prompt.
    pub anchor: f64,
    /// Gradient of `anchor` with respect to the prompt position.
    pub anchor_grad: [f64; 2],
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A model mapping `(image, prompt)` to a segmentation.
///
/// Implementors that cannot differentiate with respect to the prompt may keep
/// the default [`PromptableSegmenter::prompt_vjp`], which falls back to
/// central finite differences.
pub trait PromptableSegmenter {
    fn segment(&self, image: &Grid, p: &Prompt) -> Result<SegmentationOutput>;

    /// Gradient with respect to `(x, y)` of `sum_i upstream_i * sharpen(logits, k)_i`.
    fn prompt_vjp(&self, image: &Grid, p: &Prompt, k: f64, upstream: &Grid) -> Result<[f64; 2]> {
        image.check_shape(upstream)?;
        let h = FD_STEP;
        let (w, hgt) = (image.width(), image.height());
        // shift the stencil center inward so it stays in bounds at the borders
        let center = p.clamped(w, hgt, h);
        fd_prompt_grad(
            |q| {
                let out = self.segment(image, q)?;
                let m = sharpen(&out.logits, k)?;
                Ok(m.values().iter().zip(upstream.values()).map(|(a, b)| a * b).sum())
            },
            &center,
            h,
            w,
            hgt,
        )
    }
}

/// Stencil half-width used by the finite-difference fallback.
pub const FD_STEP: f64 = 1e-3;

/// The analytic differentiable reference segmenter.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferenceSegmenter {
    pub config: SegmenterConfig,
}

impl ReferenceSegmenter {
    pub fn new(config: SegmenterConfig) -> Self {
        Self { config }
    }
}

impl PromptableSegmenter for ReferenceSegmenter {
    fn segment(&self, image: &Grid, p: &Prompt) -> Result<SegmentationOutput> {
        segment(image, p, &self.config)
    }

    fn prompt_vjp(&self, image: &Grid, p: &Prompt, k: f64, upstream: &Grid) -> Result<[f64; 2]> {
        prompt_vjp(image, p, &self.config, k, upstream)
    }
}

fn radius_scale(image: &Grid) -> f64 {
    image.width().max(image.height()) as f64
}

fn check_prompt(image: &Grid, p: &Prompt, cfg: &SegmenterConfig) -> Result<()> {
    cfg.validate()?;
    if !p.foreground {
        return Err(Error::BackgroundPrompt);
    }
    p.check_bounds(image.width(), image.height())
}

/// Runs the reference segmenter.
pub fn segment(image: &Grid, p: &Prompt, cfg: &SegmenterConfig) -> Result<SegmentationOutput> {
    check_prompt(image, p, cfg)?;
    let (anchor, anchor_grad) = bilinear_sample(image, p)?;
    let scale = radius_scale(image);
    let inv_s2 = 1.0 / (scale * scale);
    let w = image.width();

    let logits: Vec<f64> = image
        .values()
        .iter()
        .enumerate()
        .map(|(i, &intensity)| {
            let du = (i % w) as f64 - p.x;
            let dv = (i / w) as f64 - p.y;
            let di = intensity - anchor;
            cfg.kappa * (cfg.tau - cfg.lambda_i * di * di - cfg.lambda_r * (du * du + dv * dv) * inv_s2)
        })
        .collect();
    let logits = Grid::new(w, image.height(), logits)?;
    let mask = logits.map(logistic);
    Ok(SegmentationOutput {
        logits,
        mask,
        anchor,
        anchor_grad,
    })
}

/// Steep logistic `logistic(k * z)` applied to logits.
pub fn sharpen(logits: &Grid, k: f64) -> Result<Grid> {
    if !(k > 0.0) {
        return Err(Error::InvalidConfig(format!("sharpening slope must be positive, got {k}")));
    }
    Ok(logits.map(|z| logistic(k * z)))
}

/// Exact gradient with respect to `(x, y)` of `sum_i upstream_i * sharpen(segment(image, p).logits, k)_i`.
pub fn prompt_vjp(image: &Grid, p: &Prompt, cfg: &SegmenterConfig, k: f64, upstream: &Grid) -> Result<[f64; 2]> {
    image.check_shape(upstream)?;
    let out = segment(image, p, cfg)?;
    prompt_vjp_from(&out, image, p, cfg, k, upstream)
}

/// [`prompt_vjp`] reusing an existing forward pass.
pub fn prompt_vjp_from(
    out: &SegmentationOutput,
    image: &Grid,
    p: &Prompt,
    cfg: &SegmenterConfig,
    k: f64,
    upstream: &Grid,
) -> Result<[f64; 2]> {
    image.check_shape(upstream)?;
    image.check_shape(&out.logits)?;
    if !(k > 0.0) {
        return Err(Error::InvalidConfig(format!("sharpening slope must be positive, got {k}")));
    }
    let scale = radius_scale(image);
    let inv_s2 = 1.0 / (scale * scale);
    let w = image.width();
    let [ax, ay] = out.anchor_grad;

    // dz/dx = kappa * (2 lambda_i (I - a) da/dx + 2 lambda_r (u - x) / s^2)
    let (mut gx, mut gy) = (0.0, 0.0);
    for (i, ((&up, &z), &intensity)) in upstream
        .values()
        .iter()
        .zip(out.logits.values())
        .zip(image.values())
        .enumerate()
    {
        if up == 0.0 {
            continue;
        }
        let m = logistic(k * z);
        let coef = up * m * (1.0 - m) * k * cfg.kappa * 2.0;
        if coef == 0.0 {
            continue;
        }
        let di = intensity - out.anchor;
        let du = (i % w) as f64 - p.x;
        let dv = (i / w) as f64 - p.y;
        gx += coef * (cfg.lambda_i * di * ax + cfg.lambda_r * du * inv_s2);
        gy += coef * (cfg.lambda_i * di * ay + cfg.lambda_r * dv * inv_s2);
    }
    Ok([gx, gy])
}

/// Central-difference gradient of a black-box prompt score.
///
/// The stencil `p +/- h` along each axis must lie inside the
/// `width x height` image.
pub fn fd_prompt_grad<F>(mut score: F, p: &Prompt, h: f64, width: usize, height: usize) -> Result<[f64; 2]>
where
    F: FnMut(&Prompt) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let shifted = |dx: f64, dy: f64| Prompt {
        x: p.x + dx,
        y: p.y + dy,
        foreground: p.foreground,
    };
    let stencil = [shifted(h, 0.0), shifted(-h, 0.0), shifted(0.0, h), shifted(0.0, -h)];
    for q in &stencil {
        q.check_bounds(width, height)?;
    }
    let gx = (score(&stencil[0])? - score(&stencil[1])?) / (2.0 * h);
    let gy = (score(&stencil[2])? - score(&stencil[3])?) / (2.0 * h);
    Ok([gx, gy])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut impl Rng, w: usize, h: usize) -> Grid {
        Grid::from_fn(w, h, |_, _| rng.random_range(0.0..1.0)).unwrap()
    }

    /// Low-frequency random field in [0, 1].
    fn smooth_grid(rng: &mut impl Rng, w: usize, h: usize) -> Grid {
        let waves: Vec<[f64; 4]> = (0..3)
            .map(|_| {
                [
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.0..6.3),
                    rng.random_range(0.0..6.3),
                ]
            })
            .collect();
        Grid::from_fn(w, h, |c, r| {
            let s: f64 = waves
                .iter()
                .map(|[fx, fy, px, py]| (fx * c as f64 + px).sin() * (fy * r as f64 + py).cos())
                .sum();
            0.5 + s / 6.0
        })
        .unwrap()
    }

    fn weighted_sum(image: &Grid, p: &Prompt, cfg: &SegmenterConfig, k: f64, up: &Grid) -> Result<f64> {
        let m = sharpen(&segment(image, p, cfg)?.logits, k)?;
        Ok(m.values().iter().zip(up.values()).map(|(a, b)| a * b).sum())
    }

    #[test]
    fn logit_at_own_pixel() {
        let image = Grid::filled(16, 16, 0.4).unwrap();
        let out = segment(&image, &Prompt::new(5.0, 7.0), &SegmenterConfig::default()).unwrap();
        assert!((out.logits.get(5, 7) - 3.0).abs() < 1e-12);
        assert!((out.mask.get(5, 7) - 0.952_574_126_822_433_4).abs() < 1e-12);
    }

    #[test]
    fn pixel_at_unit_radius_is_background() {
        // on a 5x4 grid the corner (4, 3) is 5 px from (0, 0) and max(W, H) = 5
        let image = Grid::filled(5, 4, 0.5).unwrap();
        let out = segment(&image, &Prompt::new(0.0, 0.0), &SegmenterConfig::default()).unwrap();
        assert!((out.logits.get(4, 3) + 37.0).abs() < 1e-12);
        assert!(out.mask.get(4, 3) < 1e-15);
    }

    #[test]
    fn degenerate_config_is_prompt_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let image = random_grid(&mut rng, 10, 10);
        let cfg = SegmenterConfig {
            lambda_i: 0.0,
            lambda_r: 0.0,
            ..SegmenterConfig::default()
        };
        let a = segment(&image, &Prompt::new(1.0, 2.0), &cfg).unwrap();
        let b = segment(&image, &Prompt::new(7.5, 3.25), &cfg).unwrap();
        assert_eq!(a.mask, b.mask);
        assert!(a.mask.values().iter().all(|&m| (m - logistic(3.0)).abs() < 1e-15));
    }

    #[test]
    fn background_prompt_is_rejected() {
        let image = Grid::filled(4, 4, 0.0).unwrap();
        let p = Prompt {
            x: 1.0,
            y: 1.0,
            foreground: false,
        };
        assert!(matches!(
            segment(&image, &p, &SegmenterConfig::default()),
            Err(Error::BackgroundPrompt)
        ));
    }

    #[test]
    fn sharpen_examples() {
        let z = Grid::new(2, 2, vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        assert_eq!(sharpen(&z, 1.0).unwrap(), z.map(logistic));
        let s = sharpen(&z, 10.0).unwrap();
        assert_eq!(s.values()[1], 0.5);
        assert!((s.values()[2] - 0.993_307_149_075_715).abs() < 1e-12);
        assert!(sharpen(&z, 0.0).is_err());
        assert!(sharpen(&z, -1.0).is_err());
    }

    #[test]
    fn vjp_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let image = random_grid(&mut rng, 12, 12);
        let up = Grid::filled(12, 12, 0.0).unwrap();
        let g = prompt_vjp(&image, &Prompt::new(4.3, 6.6), &SegmenterConfig::default(), 10.0, &up).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn vjp_symmetric_upstream_cancels() {
        let image = Grid::filled(11, 11, 0.3).unwrap();
        let p = Prompt::new(5.0, 5.0);
        let up = Grid::from_fn(11, 11, |c, r| {
            let (dx, dy) = (c as f64 - 5.0, r as f64 - 5.0);
            (-(dx * dx + dy * dy) / 8.0).exp()
        })
        .unwrap();
        let g = prompt_vjp(&image, &p, &SegmenterConfig::default(), 10.0, &up).unwrap();
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn vjp_shape_mismatch() {
        let image = Grid::filled(6, 6, 0.3).unwrap();
        let up = Grid::filled(6, 5, 0.3).unwrap();
        assert!(prompt_vjp(&image, &Prompt::new(2.0, 2.0), &SegmenterConfig::default(), 1.0, &up).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SegmenterConfig::default();
        for _ in 0..100 {
            let n = rng.random_range(8..=16);
            let image = smooth_grid(&mut rng, n, n);
            let up = Grid::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).unwrap();
            let coord = |rng: &mut ChaCha8Rng| rng.random_range(2..n - 3) as f64 + rng.random_range(0.1..0.9);
            let p = Prompt::new(coord(&mut rng), coord(&mut rng));
            // steep slopes on tiny grids need a finer stencil than h = 1e-3
            let k = rng.random_range(1.0..3.0);
            let analytic = prompt_vjp(&image, &p, &cfg, k, &up).unwrap();
            let fd = fd_prompt_grad(|q| weighted_sum(&image, q, &cfg, k, &up), &p, 1e-3, n, n).unwrap();
            for d in 0..2 {
                let err = (analytic[d] - fd[d]).abs() / analytic[d].abs().max(fd[d].abs()).max(1e-6);
                assert!(err < 1e-3, "{analytic:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn default_trait_vjp_falls_back_to_finite_differences() {
        struct Opaque(SegmenterConfig);
        impl PromptableSegmenter for Opaque {
            fn segment(&self, image: &Grid, p: &Prompt) -> Result<SegmentationOutput> {
                segment(image, p, &self.0)
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let image = random_grid(&mut rng, 10, 10);
        let up = Grid::from_fn(10, 10, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let p = Prompt::new(4.4, 5.3);
        let cfg = SegmenterConfig::default();
        let fd = Opaque(cfg).prompt_vjp(&image, &p, 2.0, &up).unwrap();
        let exact = ReferenceSegmenter::new(cfg).prompt_vjp(&image, &p, 2.0, &up).unwrap();
        for d in 0..2 {
            assert!((fd[d] - exact[d]).abs() <= 1e-3 * exact[d].abs().max(1e-6));
        }
    }

    #[test]
    fn fd_grad_examples() {
        let p = Prompt::new(3.0, 3.0);
        assert_eq!(fd_prompt_grad(|_| Ok(1.5), &p, 1e-3, 8, 8).unwrap(), [0.0, 0.0]);
        let g = fd_prompt_grad(|q| Ok(q.x), &p, 1e-3, 8, 8).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9 && g[1].abs() < 1e-12);
        assert!(fd_prompt_grad(|q| Ok(q.x), &Prompt::new(0.0, 3.0), 1e-3, 8, 8).is_err());
        assert!(fd_prompt_grad(|q| Ok(q.x), &p, 0.0, 8, 8).is_err());
    }

    #[test]
    fn translation_covariance_on_constant_images() {
        let image = Grid::filled(20, 20, 0.6).unwrap();
        let cfg = SegmenterConfig::default();
        let a = segment(&image, &Prompt::new(7.0, 8.0), &cfg).unwrap();
        let b = segment(&image, &Prompt::new(10.0, 6.0), &cfg).unwrap();
        for r in 0..20 {
            for c in 0..20 {
                let (c2, r2) = (c as i64 + 3, r as i64 - 2);
                if (0..20).contains(&c2) && (0..20).contains(&r2) {
                    let diff = a.mask.get(c, r) - b.mask.get(c2 as usize, r2 as usize);
                    assert!(diff.abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mask_strictly_inside_unit_interval(
            values in proptest::collection::vec(0.0f64..=1.0, 64),
            x in 0.0f64..=7.0, y in 0.0f64..=7.0,
        ) {
            let image = Grid::new(8, 8, values).unwrap();
            let out = segment(&image, &Prompt::new(x, y), &SegmenterConfig::default()).unwrap();
            for (&m, &z) in out.mask.values().iter().zip(out.logits.values()) {
                prop_assert!(m > 0.0 && m < 1.0 && z.is_finite());
                prop_assert_eq!(m, logistic(z));
            }
        }

        #[test]
        fn sharpen_is_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, k in 0.1f64..20.0) {
            prop_assume!(a < b);
            let z = Grid::new(2, 2, vec![a, b, 0.0, 0.0]).unwrap();
            let s = sharpen(&z, k).unwrap();
            prop_assert!(s.values()[0] <= s.values()[1]);
            prop_assert_eq!(s.values()[2], 0.5);
        }
    }
}
