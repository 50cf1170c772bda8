//! Per-stage manifests. A stage's manifest is written last, after all of its
//! outputs, so its presence marks the stage as complete.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub master_seed: u64,
    pub config_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    /// Stage parameters and diagnostics.
    pub details: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    /// Output files relative to the stage directory.
    pub outputs: Vec<PathBuf>,
}

impl StageManifest {
    pub fn new(stage: &str, config: &PipelineConfig) -> Self {
        Self {
            stage: stage.to_string(),
            master_seed: config.seed,
            config_fingerprint: config.fingerprint(),
            seeds: BTreeMap::new(),
            details: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn output(&mut self, relative: impl Into<PathBuf>) {
        self.outputs.push(relative.into());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(self)?)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Whether `dir` holds a finished run of this stage for `config`.
    pub fn is_complete(dir: &Path, stage: &str, config: &PipelineConfig) -> bool {
        match Self::read(dir) {
            Ok(m) => {
                m.stage == stage
                    && m.config_fingerprint == config.fingerprint()
                    && m.outputs.iter().all(|o| dir.join(o).exists())
            }
            Err(_) => false,
        }
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_json_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("moving {} into place", path.display()))
}
