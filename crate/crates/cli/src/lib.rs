//! Experiment harness around the `promptevo` library: phantom generation,
//! oracle training, heat maps, prompt evolution and evaluation. Every run
//! writes a manifest that `replay` can repeat byte for byte.

pub mod args;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use args::{Command, OUT_ENV};
use error::{CliError, CliResult, Context};
use manifest::RunManifest;

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).context(p.display())
}

/// Existing input paths are canonicalized; a missing one is left as given so
/// the command reports it.
fn input(p: &mut PathBuf) {
    if let Ok(c) = fs::canonicalize(&*p) {
        *p = c;
    }
}

/// Fills in the default output directory and makes every path absolute, so
/// the recorded flags mean the same thing from any working directory.
pub fn resolve(mut cmd: Command) -> CliResult<Command> {
    let name = cmd.name();
    let out = match cmd.out() {
        Some(o) => o.clone(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name),
    };
    *cmd.out_mut() = Some(absolute(&out)?);
    match &mut cmd {
        Command::Phantom(_) | Command::Replay(_) => {}
        Command::Train(a) => {
            input(&mut a.data);
            if let Some(w) = &mut a.weights_out {
                *w = absolute(w)?;
            }
        }
        Command::Heatmap(a) => {
            input(&mut a.select.data);
            if let Some(w) = &mut a.weights {
                input(w);
            }
        }
        Command::Evolve(a) => {
            input(&mut a.select.data);
            input(&mut a.ascent.weights);
        }
        Command::Evaluate(a) => {
            input(&mut a.select.data);
            input(&mut a.ascent.weights);
        }
    }
    Ok(cmd)
}

/// Resolves and runs a command, bracketing it with a manifest in its output
/// directory.
pub fn execute(cmd: Command) -> CliResult<()> {
    let cmd = match cmd {
        Command::Replay(r) => {
            let recorded = RunManifest::read(&r.manifest)?;
            let mut flags = recorded.flags;
            if let Command::Replay(_) = flags {
                return Err(CliError::data("a manifest cannot record a replay"));
            }
            if r.out.is_some() {
                *flags.out_mut() = r.out;
            }
            flags
        }
        other => other,
    };
    let cmd = resolve(cmd)?;
    let out = cmd.out().cloned().expect("resolved commands have an output directory");
    fs::create_dir_all(&out).context(out.display())?;
    let mut manifest = RunManifest::start(&cmd, &out);
    manifest.write()?;
    let result = commands::dispatch(&cmd, &out);
    manifest.finish(&result);
    manifest.write()?;
    result
}
