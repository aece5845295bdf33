use std::path::Path;

use promptevo::{make_dataset, PhantomSpec};

use crate::args::PhantomArgs;
use crate::dataset::write_dataset;
use crate::error::{CliError, CliResult};

pub fn run(a: &PhantomArgs, out: &Path) -> CliResult<()> {
    if a.train < 1 || a.val < 1 || a.test < 1 {
        return Err(CliError::usage("--train, --val and --test must each be at least 1"));
    }
    let d = PhantomSpec::default();
    let spec = PhantomSpec {
        width: a.width,
        height: a.height,
        rib_amplitude: a.rib_amplitude.unwrap_or(d.rib_amplitude),
        rib_period: a.rib_period.unwrap_or(d.rib_period),
        pathology_probability: a.pathology_probability.unwrap_or(d.pathology_probability),
        noise_sigma: a.noise_sigma.unwrap_or(d.noise_sigma),
        ..d
    };
    spec.validate()?;
    let data = make_dataset(&spec, a.train, a.val, a.test, a.seed)?;
    write_dataset(&data, out)?;
    println!(
        "wrote {} phantoms to {}",
        data.train.len() + data.val.len() + data.test.len(),
        out.display()
    );
    Ok(())
}
