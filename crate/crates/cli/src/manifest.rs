use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::{CliResult, Context};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

/// Record of one command invocation. `flags` holds the fully resolved flag
/// set, so feeding it back through `replay` repeats the run exactly.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub flags: Command,
    pub seed: Option<u64>,
    pub version: String,
    pub out_dir: PathBuf,
    pub started_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
    pub status: RunStatus,
    pub error: Option<String>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(flags: &Command, out_dir: &Path) -> Self {
        Self {
            command: flags.name().to_string(),
            flags: flags.clone(),
            seed: flags.seed(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            out_dir: out_dir.to_path_buf(),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
            status: RunStatus::Running,
            error: None,
        }
    }

    pub fn finish(&mut self, result: &CliResult<()>) {
        self.finished_unix_ms = Some(now_ms());
        match result {
            Ok(()) => self.status = RunStatus::Ok,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self) -> CliResult<()> {
        let path = self.out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").context(path.display())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).context(path.display())?;
        serde_json::from_str(&text).context(path.display())
    }
}
