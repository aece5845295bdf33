use std::path::Path;

use promptevo::oracle::{regressor_forward, Mode};
use promptevo::segmenter::{segment, sharpen};
use promptevo::{dice, Prompt};

use super::{load_weights, num, segmenter_config, select_samples, write_csv};
use crate::args::HeatmapArgs;
use crate::error::{CliError, CliResult};

/// Places the prompt on every ground-truth pixel of a `stride` grid and
/// records the Dice (and oracle score, given weights) of the sharpened mask.
pub fn run(a: &HeatmapArgs, out: &Path) -> CliResult<()> {
    if a.stride < 1 {
        return Err(CliError::usage("--stride must be at least 1"));
    }
    let cfg = segmenter_config(&a.segmenter)?;
    let params = a.weights.as_deref().map(load_weights).transpose()?;
    for s in select_samples(&a.select)? {
        let mut rows = Vec::new();
        for y in (0..s.gt.height()).step_by(a.stride) {
            for x in (0..s.gt.width()).step_by(a.stride) {
                if !s.gt.is_foreground(x, y) {
                    continue;
                }
                let seg = segment(&s.image, &Prompt::new(x as f64, y as f64), &cfg)?;
                let mask = sharpen(&seg.logits, a.segmenter.k)?;
                let d = dice(&mask, s.gt.as_grid())?;
                let score = match &params {
                    Some(p) => num(regressor_forward(p, &s.image, &mask, Mode::Eval)?.0),
                    None => String::new(),
                };
                rows.push(vec![x.to_string(), y.to_string(), num(d), score]);
            }
        }
        let n = rows.len();
        write_csv(&out.join(format!("heatmap_{}.csv", s.id)), &["x", "y", "dice", "score"], rows)?;
        println!("{}: {n} prompt locations", s.id);
    }
    Ok(())
}
