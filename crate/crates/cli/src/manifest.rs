//! Run manifests: everything needed to reproduce a run, plus what it produced.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Acceptance {
    pub chain: usize,
    pub seed: u64,
    pub z: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration; pass the manifest back via `--config` to rerun.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub wall_time_secs: f64,
    pub acceptance: Vec<Acceptance>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            tool: "lspm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seeds: Vec::new(),
            wall_time_secs: 0.0,
            acceptance: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, started: Instant, dir: &Path, name: &str) -> Result<()> {
        self.wall_time_secs = started.elapsed().as_secs_f64();
        write_json(&dir.join(name), &self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
