use super::{BinaryMask, Grid, Prompt};
use crate::error::{Error, Result};

/// Denominator guard for [`dice`]; makes the Dice of two empty masks zero.
pub const DICE_EPS: f64 = 1e-7;

/// Soft Dice overlap `2 sum(a*b) / (sum(a) + sum(b) + eps)`.
///
/// For binary inputs this is the set Dice up to the guard term.
pub fn dice(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_shape(b)?;
    let (mut inter, mut total) = (0.0, 0.0);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        inter += x * y;
        total += x + y;
    }
    Ok((2.0 * inter / (total + DICE_EPS)).clamp(0.0, 1.0))
}

/// Mean `(col, row)` of the foreground pixels, as a foreground prompt.
pub fn centroid(mask: &BinaryMask) -> Result<Prompt> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (c, r) in mask.foreground() {
        sx += c as f64;
        sy += r as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::DegenerateMask("centroid of an empty mask"));
    }
    Ok(Prompt::new(sx / n as f64, sy / n as f64))
}

/// Pearson product-moment correlation of two equal-length samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::UndefinedCorrelation("samples differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two observations"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
