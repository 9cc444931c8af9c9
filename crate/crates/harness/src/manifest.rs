//! Run manifests: what was run, with which configuration and seeds, and
//! what it produced.

use std::path::Path;

use fedtrade::collection::PolicyKind;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, Result};
use crate::output::{file_digest, read_json, write_json};
use crate::seeds::SeedRecord;

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
    /// False for files holding wall-clock measurements.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub policy: Option<PolicyKind>,
    pub config_digest: String,
    pub master_seed: u64,
    pub config: ScenarioConfig,
    pub seeds: Vec<SeedRecord>,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        policy: Option<PolicyKind>,
        config: &ScenarioConfig,
        mut seeds: Vec<SeedRecord>,
        outputs: Vec<OutputEntry>,
    ) -> Self {
        seeds.sort();
        Self {
            artifact_version: ARTIFACT_VERSION.to_owned(),
            command: command.to_owned(),
            policy,
            config_digest: config.digest(),
            master_seed: config.master_seed,
            config: config.clone(),
            seeds,
            outputs,
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(Self::file_name(&self.command)), self)
    }

    /// Read a manifest and check that its embedded configuration still
    /// matches the recorded digest.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = read_json(path)?;
        if manifest.artifact_version != ARTIFACT_VERSION {
            return Err(HarnessError::Config(format!(
                "{}: artifact version {} is not supported",
                path.display(),
                manifest.artifact_version
            )));
        }
        manifest.config.validate()?;
        let digest = manifest.config.digest();
        if digest != manifest.config_digest {
            return Err(HarnessError::Config(format!(
                "{}: config digest mismatch (recorded {}, computed {digest})",
                path.display(),
                manifest.config_digest
            )));
        }
        Ok(manifest)
    }

    /// Reproducible outputs of `self` whose digest differs in `other`.
    pub fn mismatches(&self, other: &RunManifest) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|e| e.reproducible)
            .filter(|e| other.outputs.iter().find(|o| o.file == e.file).is_none_or(|o| o.sha256 != e.sha256))
            .map(|e| e.file.clone())
            .collect()
    }
}

/// Digest entries for files written to `dir`.
pub fn inventory(dir: &Path, files: &[(&str, bool)]) -> Result<Vec<OutputEntry>> {
    files
        .iter()
        .map(|&(file, reproducible)| {
            let (sha256, bytes) = file_digest(&dir.join(file))?;
            Ok(OutputEntry { file: file.to_owned(), sha256, bytes, reproducible })
        })
        .collect()
}
