use std::path::Path;

use promptevo::phantom::save_pgm;
use promptevo::segmenter::{segment, sharpen};
use promptevo::{evolve, initial_prompt, Sample, Trajectory};
use rayon::prelude::*;

use super::{ensure_dir, evolve_config, load_weights, num, select_samples, with_pool, write_csv};
use crate::args::EvolveArgs;
use crate::error::CliResult;

pub fn run(a: &EvolveArgs, out: &Path) -> CliResult<()> {
    let cfg = evolve_config(&a.ascent)?;
    let params = load_weights(&a.ascent.weights)?;
    let samples = select_samples(&a.select)?;

    let run_one = |s: &Sample| -> CliResult<()> {
        let p0 = initial_prompt(&s.gt)?;
        let (_, traj) = evolve(&s.image, &p0, &cfg, &params, Some(&s.gt))?;
        write_trajectory(&traj, &out.join(format!("trajectory_{}.csv", s.id)))?;
        if a.dump_masks {
            let dir = out.join("masks").join(&s.id);
            ensure_dir(&dir)?;
            for r in &traj.records {
                let seg = segment(&s.image, &r.prompt, &cfg.segmenter)?;
                save_pgm(&sharpen(&seg.logits, cfg.sharpen)?, dir.join(format!("iter_{:03}.pgm", r.iteration)))?;
            }
        }
        let (first, best) = (traj.initial(), traj.best_record());
        println!(
            "{}: score {:.4} -> {:.4} (best at iter {})",
            s.id, first.score, best.score, best.iteration
        );
        Ok(())
    };
    with_pool(a.ascent.jobs, || samples.par_iter().map(run_one).collect::<CliResult<Vec<()>>>())??;
    Ok(())
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> CliResult<()> {
    write_csv(
        path,
        &["iter", "x", "y", "score", "dice"],
        traj.records.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                num(r.prompt.x),
                num(r.prompt.y),
                num(r.score),
                r.dice.map(num).unwrap_or_default(),
            ]
        }),
    )
}
