use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_json, sha256_file, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Versions {
    pub countquant: String,
    pub countquant_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            countquant: env!("CARGO_PKG_VERSION").into(),
            countquant_core: countquant_core::VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StageRecord {
    pub stage: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state")]
pub enum RunStatus {
    Complete,
    Partial { failed_stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub versions: Versions,
    pub status: RunStatus,
    pub wall_clock_seconds: f64,
    /// In execution order; a re-run stage replaces its earlier record.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            versions: Versions::default(),
            status: RunStatus::Complete,
            wall_clock_seconds: 0.0,
            stages: Vec::new(),
        }
    }

    /// Continue the manifest of an earlier command in the same directory.
    pub fn resume(dir: &Path, command: &str, config: &RunConfig) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let mut m = if path.exists() {
            read_json::<RunManifest>(&path)?
        } else {
            Self::new(command, config)
        };
        m.command = command.into();
        m.config = config.clone();
        m.versions = Versions::default();
        m.status = RunStatus::Complete;
        Ok(m)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Checksum `files` (relative to `dir`) and record them under `stage`.
    pub fn record(
        &mut self,
        dir: &Path,
        stage: &str,
        seconds: f64,
        files: &[String],
    ) -> CliResult<()> {
        let files = files
            .iter()
            .map(|f| {
                Ok(FileRecord {
                    path: f.clone(),
                    sha256: sha256_file(&dir.join(f))?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let rec = StageRecord {
            stage: stage.into(),
            wall_clock_seconds: seconds,
            files,
        };
        match self.stages.iter_mut().find(|s| s.stage == stage) {
            Some(s) => *s = rec,
            None => self.stages.push(rec),
        }
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// (path, sha256) of every recorded file, sorted by path.
    pub fn checksums(&self) -> Vec<(String, String)> {
        let mut v: Vec<_> = self
            .stages
            .iter()
            .flat_map(|s| s.files.iter().map(|f| (f.path.clone(), f.sha256.clone())))
            .collect();
        v.sort();
        v
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Recorded files that no longer exist or whose content changed.
    pub fn missing_artifacts(&self, dir: &Path) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|s| &s.files)
            .filter(|f| {
                sha256_file(&dir.join(&f.path))
                    .map(|h| h != f.sha256)
                    .unwrap_or(true)
            })
            .map(|f| f.path.clone())
            .collect()
    }

    pub fn ensure_nonempty(&self) -> CliResult<()> {
        if self.stages.is_empty() {
            return Err(CliError::config("manifest records no stages"));
        }
        Ok(())
    }
}
