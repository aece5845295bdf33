use super::{Grid, Prompt};
use crate::error::Result;

/// Bilinear interpolation of `grid` at `p` together with its exact partial
/// derivatives `(d/dx, d/dy)`.
///
/// Cells are anchored at `floor(coord)`, capped so the last row/column is
/// reached with weight 1 from the interior cell. At the far boundary the
/// derivative is therefore the one-sided interior slope.
pub fn bilinear_sample(grid: &Grid, p: &Prompt) -> Result<(f64, [f64; 2])> {
    p.check_bounds(grid.width(), grid.height())?;

    let x0 = (p.x.floor() as usize).min(grid.width() - 2);
    let y0 = (p.y.floor() as usize).min(grid.height() - 2);
    let fx = p.x - x0 as f64;
    let fy = p.y - y0 as f64;

    let g00 = grid.get(x0, y0);
    let g10 = grid.get(x0 + 1, y0);
    let g01 = grid.get(x0, y0 + 1);
    let g11 = grid.get(x0 + 1, y0 + 1);

    let top = g00 + fx * (g10 - g00);
    let bottom = g01 + fx * (g11 - g01);
    let value = top + fy * (bottom - top);

    let dx = (1.0 - fy) * (g10 - g00) + fy * (g11 - g01);
    let dy = bottom - top;
    Ok((value, [dx, dy]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_grid_has_zero_gradient() {
        let g = Grid::filled(5, 4, 0.37).unwrap();
        let (v, grad) = bilinear_sample(&g, &Prompt::new(2.3, 1.8)).unwrap();
        assert!((v - 0.37).abs() < 1e-15);
        assert_eq!(grad, [0.0, 0.0]);
    }

    #[test]
    fn integer_position_returns_pixel() {
        let g = Grid::from_fn(4, 3, |c, r| (c * 10 + r) as f64).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let (v, _) = bilinear_sample(&g, &Prompt::new(c as f64, r as f64)).unwrap();
                assert_eq!(v, g.get(c, r));
            }
        }
    }

    #[test]
    fn linear_ramp() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let (v, grad) = bilinear_sample(&g, &Prompt::new(0.5, 0.0)).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(grad, [1.0, 0.0]);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let g = Grid::filled(3, 3, 0.0).unwrap();
        assert!(bilinear_sample(&g, &Prompt::new(-0.01, 1.0)).is_err());
        assert!(bilinear_sample(&g, &Prompt::new(1.0, 2.01)).is_err());
        assert!(bilinear_sample(&g, &Prompt::new(f64::NAN, 1.0)).is_err());
        assert!(bilinear_sample(&g, &Prompt::new(2.0, 2.0)).is_ok());
    }

    #[test]
    fn far_edge_uses_interior_slope() {
        let g = Grid::from_fn(3, 3, |c, _| (c * c) as f64).unwrap();
        let (v, grad) = bilinear_sample(&g, &Prompt::new(2.0, 1.0)).unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(grad[0], 3.0);
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            values in proptest::collection::vec(0.0f64..1.0, 36),
            cx in 0usize..5, cy in 0usize..5,
            fx in 0.01f64..0.99, fy in 0.01f64..0.99,
        ) {
            let g = Grid::new(6, 6, values).unwrap();
            let p = Prompt::new(cx as f64 + fx, cy as f64 + fy);
            let (_, grad) = bilinear_sample(&g, &p).unwrap();
            let h = 1e-4;
            // skip stencils that straddle a cell boundary
            prop_assume!(fx > h && fx < 1.0 - h && fy > h && fy < 1.0 - h);
            let f = |x: f64, y: f64| bilinear_sample(&g, &Prompt::new(x, y)).unwrap().0;
            let fd_x = (f(p.x + h, p.y) - f(p.x - h, p.y)) / (2.0 * h);
            let fd_y = (f(p.x, p.y + h) - f(p.x, p.y - h)) / (2.0 * h);
            prop_assert!((fd_x - grad[0]).abs() < 1e-6);
            prop_assert!((fd_y - grad[1]).abs() < 1e-6);
        }
    }
}
