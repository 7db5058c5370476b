//! Run manifest: what was produced, from which configuration, and whether
//! the run finished.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result, Stage};
use crate::store::{read_file, sha256_hex, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Option<Stage>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    /// SHA-256 of the canonical configuration text.
    pub config_digest: String,
    pub master_seed: u64,
    pub status: RunStatus,
    #[serde(default)]
    pub failure: Option<Failure>,
    pub completed_stages: Vec<Stage>,
    pub artifacts: Vec<ArtifactRecord>,
    /// Wall-clock times; everything else in the manifest is deterministic.
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(config_digest: String, master_seed: u64) -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest,
            master_seed,
            status: RunStatus::Incomplete,
            failure: None,
            completed_stages: Vec::new(),
            artifacts: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn artifact(&self, name: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Record (or replace) an artifact written into the run directory.
    pub fn record(&mut self, name: &str, file: &str, bytes: &[u8]) {
        let record = ArtifactRecord {
            name: name.to_string(),
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.artifacts.iter_mut().find(|a| a.name == name) {
            Some(existing) => *existing = record,
            None => self.artifacts.push(record),
        }
    }

    pub fn mark_stage(&mut self, stage: Stage, seconds: f64) {
        if !self.completed_stages.contains(&stage) {
            self.completed_stages.push(stage);
        }
        self.timings.retain(|t| t.stage != stage);
        self.timings.push(StageTiming { stage, seconds });
    }

    /// Drop a stage and every artifact it produced, before it is rerun.
    pub fn forget_stage(&mut self, stage: Stage, artifact_names: impl Fn(&str) -> bool) {
        self.completed_stages.retain(|&s| s != stage);
        self.timings.retain(|t| t.stage != stage);
        self.artifacts.retain(|a| !artifact_names(&a.name));
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Accepts the manifest file itself or the run directory holding it.
    pub fn load(path: &Path) -> Result<(Self, std::path::PathBuf)> {
        let (file, dir) = if path.is_dir() {
            (path.join(MANIFEST_FILE), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().unwrap_or(Path::new(".")).to_path_buf())
        };
        let bytes = read_file(&file)?;
        let manifest = serde_json::from_slice(&bytes).map_err(|e| HarnessError::format(&file, e.to_string()))?;
        Ok((manifest, dir))
    }

    /// Artifacts whose file is missing or whose digest no longer matches.
    pub fn missing_artifacts(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| match std::fs::read(dir.join(&a.file)) {
                Ok(bytes) => sha256_hex(&bytes) != a.sha256,
                Err(_) => true,
            })
            .map(|a| a.file.clone())
            .collect()
    }
}
