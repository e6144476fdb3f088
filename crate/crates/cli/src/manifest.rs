//! Run manifests. A manifest echoes the effective configuration and records
//! content hashes of every input and output file, so any metric in it can
//! be regenerated from the manifest alone. Wall-clock times live in a
//! separate `<command>.timing.json` so that reruns produce identical
//! manifests.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use pemo_core::composer::Blueprint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub command: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    /// Dataset file (relative to the output directory) to SHA-256.
    pub datasets: BTreeMap<String, String>,
    /// Other files this run read or wrote, with their SHA-256.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub blueprints: BTreeMap<String, Blueprint>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> RunManifest {
        let mut versions = BTreeMap::new();
        versions.insert("pemo-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest-format".to_string(), MANIFEST_FORMAT.to_string());
        RunManifest {
            format: MANIFEST_FORMAT,
            command: command.to_string(),
            config: config.clone(),
            versions,
            datasets: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            param_count: None,
            metrics: BTreeMap::new(),
            blueprints: BTreeMap::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn path_in(dir: &Path, command: &str) -> PathBuf {
        dir.join(Self::file_name(command))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(dir, &self.command);
        write_file(&path, self.to_json()?.as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Records the hash of a dataset file under its path relative to `dir`.
    pub fn add_dataset(&mut self, dir: &Path, rel: &str) -> Result<()> {
        self.datasets.insert(rel.to_string(), sha256_file(&dir.join(rel))?);
        Ok(())
    }

    pub fn add_artifact(&mut self, dir: &Path, rel: &str) -> Result<()> {
        self.artifacts.insert(rel.to_string(), sha256_file(&dir.join(rel))?);
        Ok(())
    }

    /// Checks that every dataset and artifact this manifest recorded still
    /// hashes to the recorded value under `dir`.
    pub fn verify_files(&self, dir: &Path) -> Result<()> {
        for (rel, want) in self.datasets.iter().chain(&self.artifacts) {
            let path = dir.join(rel);
            if !path.exists() {
                return Err(CliError::Integrity(format!("{} recorded by the manifest is missing", path.display())));
            }
            let got = sha256_file(&path)?;
            if &got != want {
                return Err(CliError::Integrity(format!(
                    "{} hashes to {got}, the {} manifest recorded {want}",
                    path.display(),
                    self.command
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_clock_s: f64,
    pub stages: BTreeMap<String, f64>,
}

impl Timing {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.timing.json", self.command));
        write_file(&path, (serde_json::to_string_pretty(self)? + "\n").as_bytes())?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
