use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn hash(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: u64,
    /// Oracle evaluations of sampled masks.
    pub oracle_calls: u64,
    /// Evaluations of the unpruned model used as the normalization baseline.
    #[serde(default)]
    pub baseline_calls: u64,
    pub surrogate_forwards: u64,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strata: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stratum_counts: Vec<usize>,
    #[serde(default)]
    pub clamped_scores: u64,
    pub outputs: Vec<FileEntry>,
}

/// Run record kept next to the outputs. Each stage replaces its own entry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rng: String,
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()).with_path(&path)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn record(&mut self, stage: StageRecord) {
        self.stages.retain(|s| s.stage != stage.stage);
        self.stages.push(stage);
        self.stages.sort_by(|a, b| a.stage.cmp(&b.stage));
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn total_oracle_calls(&self) -> u64 {
        self.stages.iter().map(|s| s.oracle_calls).sum()
    }

    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.stages.iter().flat_map(|s| &s.outputs)
    }
}
