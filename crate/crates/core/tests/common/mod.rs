//! Test-only reference regressor and finite-difference helpers.
//!
//! `naive_scores` re-derives the forward pass from the layer definitions with
//! direct index arithmetic; it shares nothing with the library's loops.

#![allow(dead_code)]

use promptevo::oracle::{Mode, RegressorParams, CHANNEL_PLAN, LEAKY_SLOPE, NORM_EPS, STRIDES};
use promptevo::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores of a batch plus the sign of every leaky-ReLU input, which tells two
/// evaluations apart when a finite-difference step straddles a kink.
pub fn naive_scores(params: &RegressorParams, images: &[Grid], masks: &[Grid], mode: Mode) -> (Vec<f64>, Vec<bool>) {
    let b = images.len();
    let (mut h, mut w) = (images[0].height(), images[0].width());
    // act[n][c][r][col]
    let mut act: Vec<Vec<Vec<Vec<f64>>>> = (0..b)
        .map(|n| {
            [&images[n], &masks[n]]
                .iter()
                .map(|g| (0..h).map(|r| (0..w).map(|c| g.get(c, r)).collect()).collect())
                .collect()
        })
        .collect();
    let mut pattern = Vec::new();

    for (l, conv) in params.convs.iter().enumerate() {
        let s = STRIDES[l];
        let (cin, cout) = (CHANNEL_PLAN[l], CHANNEL_PLAN[l + 1]);
        let ho = (h + 2 - 3) / s + 1;
        let wo = (w + 2 - 3) / s + 1;
        let mut z = vec![vec![vec![vec![0.0; wo]; ho]; cout]; b];
        for n in 0..b {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias[co];
                        for ci in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * s + ky) as isize - 1;
                                    let ix = (ox * s + kx) as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += conv.weight[co * cin * 9 + ci * 9 + ky * 3 + kx]
                                        * act[n][ci][iy as usize][ix as usize];
                                }
                            }
                        }
                        z[n][co][oy][ox] = acc;
                    }
                }
            }
        }
        if let Some(norm) = params.norms.get(l) {
            for co in 0..cout {
                let (mean, var) = match mode {
                    Mode::Eval => (norm.running_mean[co], norm.running_var[co]),
                    Mode::Train => {
                        let vals: Vec<f64> = z.iter().flat_map(|zn| zn[co].iter().flatten().copied()).collect();
                        let m = vals.iter().sum::<f64>() / vals.len() as f64;
                        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
                        (m, v)
                    }
                };
                for zn in z.iter_mut() {
                    for row in zn[co].iter_mut() {
                        for v in row.iter_mut() {
                            let y = norm.scale[co] * (*v - mean) / (var + NORM_EPS).sqrt() + norm.shift[co];
                            pattern.push(y > 0.0);
                            *v = if y > 0.0 { y } else { LEAKY_SLOPE * y };
                        }
                    }
                }
            }
        }
        act = z;
        h = ho;
        w = wo;
    }
    let scores = act
        .iter()
        .map(|an| {
            let mean = an[0].iter().flatten().sum::<f64>() / (h * w) as f64;
            1.0 / (1.0 + (-mean).exp())
        })
        .collect();
    (scores, pattern)
}

/// Central difference of `f` at step `h`. When the two evaluations disagree
/// on which side of a kink some unit sits, the quotient says nothing about
/// the derivative, so the step is shrunk until both sides agree.
pub fn central_difference(f: impl Fn(f64) -> (f64, Vec<bool>), h: f64) -> f64 {
    let mut step = h;
    for _ in 0..6 {
        let (plus, pp) = f(step);
        let (minus, pm) = f(-step);
        if pp == pm {
            return (plus - minus) / (2.0 * step);
        }
        step /= 10.0;
    }
    panic!("no kink-free step found below {h}");
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// A random regressor with perturbed normalization, a random batch and a
/// random upstream gradient.
pub struct Instance {
    pub params: RegressorParams,
    pub images: Vec<Grid>,
    pub masks: Vec<Grid>,
    pub upstream: Vec<f64>,
    pub mode: Mode,
}

impl Instance {
    pub fn random(seed: u64, n: usize, batch: usize, mode: Mode) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = RegressorParams::init(seed);
        // move normalization away from its identity initialization
        for norm in &mut params.norms {
            for c in 0..norm.scale.len() {
                norm.scale[c] = rng.random_range(0.5..1.5);
                norm.shift[c] = rng.random_range(-0.3..0.3);
                norm.running_mean[c] = rng.random_range(-0.2..0.2);
                norm.running_var[c] = rng.random_range(0.5..2.0);
            }
        }
        for conv in &mut params.convs {
            for b in &mut conv.bias {
                *b = rng.random_range(-0.1..0.1);
            }
        }
        let mut grid = || Grid::from_fn(n, n, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let images: Vec<Grid> = (0..batch).map(|_| grid()).collect();
        let masks: Vec<Grid> = (0..batch).map(|_| grid()).collect();
        let upstream = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self {
            params,
            images,
            masks,
            upstream,
            mode,
        }
    }

    /// `sum_n upstream_n * score_n` under the reference forward pass.
    pub fn loss(&self, params: &RegressorParams, masks: &[Grid]) -> (f64, Vec<bool>) {
        let (scores, pattern) = naive_scores(params, &self.images, masks, self.mode);
        (scores.iter().zip(&self.upstream).map(|(s, u)| s * u).sum(), pattern)
    }

    pub fn fd_param(&self, tensor: usize, index: usize, h: f64) -> f64 {
        central_difference(
            |d| {
                let mut p = self.params.clone();
                p.trainable_mut()[tensor][index] += d;
                self.loss(&p, &self.masks)
            },
            h,
        )
    }

    pub fn fd_mask(&self, n: usize, col: usize, row: usize, h: f64) -> f64 {
        central_difference(
            |d| {
                let mut masks = self.masks.clone();
                let v = masks[n].get(col, row);
                masks[n].set(col, row, v + d);
                self.loss(&self.params, &masks)
            },
            h,
        )
    }
}

/// Low-frequency random field in [0, 1].
pub fn smooth_grid(rng: &mut impl Rng, w: usize, h: usize) -> Grid {
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

/// A coordinate in `[lo, hi)` whose fractional part lies in `[gap, 1 - gap]`.
pub fn off_grid_point(rng: &mut impl Rng, lo: usize, hi: usize, gap: f64) -> f64 {
    rng.random_range(lo..hi) as f64 + rng.random_range(gap..1.0 - gap)
}
