use crate::error::{Error, Result};

/// A `width x height` field of scalars stored row-major.
///
/// Pixel `(col, row)` has its center at coordinate `(x, y) = (col, row)`;
/// the origin is the center of the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be at least 2x2, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a grid by evaluating `f(col, row)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(col, row));
            }
        }
        Self::new(width, height, values)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_unit_range(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// A grid whose values are exactly 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask(Grid);

impl BinaryMask {
    pub fn from_grid(grid: Grid) -> Result<Self> {
        if grid.values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidGrid("binary mask values must be 0 or 1".into()));
        }
        Ok(Self(grid))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Grid::from_fn(width, height, |c, r| if f(c, r) { 1.0 } else { 0.0 }).map(Self)
    }

    /// Thresholds a soft grid: foreground where `value >= threshold`.
    pub fn threshold(grid: &Grid, threshold: f64) -> Self {
        Self(grid.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height
    }

    #[inline]
    pub fn is_foreground(&self, col: usize, row: usize) -> bool {
        self.0.get(col, row) == 1.0
    }

    pub fn count(&self) -> usize {
        self.0.values.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.0.len() as f64
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    /// Iterates foreground pixels as `(col, row)` in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.0.width;
        self.0
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.0.same_shape(&other.0)
            && self
                .0
                .values
                .iter()
                .zip(&other.0.values)
                .all(|(&a, &b)| a <= b)
    }
}

/// A single click prompt: a continuous position plus a foreground label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prompt {
    /// Column coordinate in pixel units.
    pub x: f64,
    /// Row coordinate in pixel units.
    pub y: f64,
    pub foreground: bool,
}

impl Prompt {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            foreground: true,
        }
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x <= (width - 1) as f64 && self.y <= (height - 1) as f64
    }

    /// Clamps the position to `[margin, width-1-margin] x [margin, height-1-margin]`.
    pub fn clamped(self, width: usize, height: usize, margin: f64) -> Self {
        let clamp = |v: f64, hi: f64| {
            let lo = margin.min(hi / 2.0);
            let hi = (hi - margin).max(hi / 2.0);
            v.clamp(lo, hi)
        };
        Self {
            x: clamp(self.x, (width - 1) as f64),
            y: clamp(self.y, (height - 1) as f64),
            foreground: self.foreground,
        }
    }

    /// The pixel whose center is nearest to this prompt.
    pub fn pixel(&self) -> (usize, usize) {
        (self.x.round().max(0.0) as usize, self.y.round().max(0.0) as usize)
    }

    pub(crate) fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() && self.in_bounds(width, height) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: self.x,
                y: self.y,
                width,
                height,
            })
        }
    }
}
