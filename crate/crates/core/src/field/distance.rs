//! Exact Euclidean distance transforms.
//!
//! Squared distances are computed with the separable lower-envelope-of-parabolas
//! algorithm: one 1D pass along every column, then one along every row. All
//! intermediate values are integer-valued squared distances held in `f64`, so
//! the result is exact.

use super::{BinaryMask, Grid};
use crate::error::{Error, Result};

/// Stand-in for "no site"; finite so that parabola intersections stay well defined.
const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of the sampled function `f`,
/// written into `out`. `vertices` and `bounds` are scratch buffers of at least
/// `f.len()` and `f.len() + 1` entries.
fn squared_edt_1d(f: &[f64], out: &mut [f64], vertices: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    vertices[0] = 0;
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;

    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let intersect = |v: usize| (fq - (f[v] + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
        let mut s = intersect(vertices[k]);
        // bounds[0] is -inf, so this stops at k == 0 at the latest
        while s <= bounds[k] {
            k -= 1;
            s = intersect(vertices[k]);
        }
        k += 1;
        vertices[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }

    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[k + 1] < q as f64 {
            k += 1;
        }
        let v = vertices[k];
        let d = q as f64 - v as f64;
        *o = d * d + f[v];
    }
}

/// Squared Euclidean distance from every pixel to the nearest pixel for which
/// `is_site` holds. Pixels with no site anywhere get a value of at least `FAR`.
fn squared_distance_to(width: usize, height: usize, is_site: impl Fn(usize) -> bool) -> Vec<f64> {
    let n = width.max(height);
    let mut vertices = vec![0usize; n];
    let mut bounds = vec![0.0f64; n + 1];
    let mut line = vec![0.0f64; n];
    let mut out_line = vec![0.0f64; n];

    let mut grid: Vec<f64> = (0..width * height)
        .map(|i| if is_site(i) { 0.0 } else { FAR })
        .collect();

    for col in 0..width {
        for row in 0..height {
            line[row] = grid[row * width + col];
        }
        squared_edt_1d(&line[..height], &mut out_line[..height], &mut vertices, &mut bounds);
        for row in 0..height {
            grid[row * width + col] = out_line[row];
        }
    }
    for row in 0..height {
        let span = row * width..(row + 1) * width;
        line[..width].copy_from_slice(&grid[span.clone()]);
        squared_edt_1d(&line[..width], &mut grid[span], &mut vertices, &mut bounds);
    }
    grid
}

/// Signed Euclidean distance from each pixel center to the nearest pixel
/// center of the opposite class: positive inside the mask, negative outside.
pub fn signed_distance_transform(mask: &BinaryMask) -> Result<Grid> {
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.count();
    if fg == 0 {
        return Err(Error::DegenerateMask("mask has no foreground pixels"));
    }
    if fg == w * h {
        return Err(Error::DegenerateMask("mask has no background pixels"));
    }

    let values = mask.as_grid().values();
    let to_background = squared_distance_to(w, h, |i| values[i] == 0.0);
    let to_foreground = squared_distance_to(w, h, |i| values[i] == 1.0);

    let signed = values
        .iter()
        .zip(to_background.iter().zip(&to_foreground))
        .map(|(&v, (&db, &df))| if v == 1.0 { db.sqrt() } else { -df.sqrt() })
        .collect();
    Grid::new(w, h, signed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mask: &BinaryMask) -> Vec<f64> {
        let (w, h) = (mask.width(), mask.height());
        let mut out = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let inside = mask.is_foreground(c, r);
                let mut best = i64::MAX;
                for r2 in 0..h {
                    for c2 in 0..w {
                        if mask.is_foreground(c2, r2) != inside {
                            let dx = c as i64 - c2 as i64;
                            let dy = r as i64 - r2 as i64;
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                }
                let d = (best as f64).sqrt();
                out.push(if inside { d } else { -d });
            }
        }
        out
    }

    #[test]
    fn single_pixel() {
        let m = BinaryMask::from_fn(5, 5, |c, r| c == 2 && r == 2).unwrap();
        let d = signed_distance_transform(&m).unwrap();
        assert_eq!(d.get(2, 2), 1.0);
        assert_eq!(d.get(1, 2), -1.0);
        assert_eq!(d.get(2, 3), -1.0);
        assert_eq!(d.get(1, 1), -(2f64).sqrt());
        assert_eq!(d.get(0, 0), -(8f64).sqrt());
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let empty = BinaryMask::from_fn(4, 4, |_, _| false).unwrap();
        let full = BinaryMask::from_fn(4, 4, |_, _| true).unwrap();
        assert!(matches!(signed_distance_transform(&empty), Err(Error::DegenerateMask(_))));
        assert!(matches!(signed_distance_transform(&full), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..300 {
            let (w, h) = match case % 3 {
                0 => (8, 8),
                1 => (16, 16),
                _ => (rng.random_range(2..=16), rng.random_range(2..=16)),
            };
            let density: f64 = rng.random_range(0.02..0.98);
            let mask = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap();
            if mask.count() == 0 || mask.count() == w * h {
                continue;
            }
            let fast = signed_distance_transform(&mask).unwrap();
            assert_eq!(fast.values(), brute_force(&mask).as_slice(), "case {case}");
        }
    }

    #[test]
    fn rectangular_grids() {
        let m = BinaryMask::from_fn(13, 3, |c, r| c == 12 && r == 0).unwrap();
        let d = signed_distance_transform(&m).unwrap();
        assert_eq!(d.values(), brute_force(&m).as_slice());
    }
}
