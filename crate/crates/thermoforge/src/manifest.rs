//! Per-run manifest: what was executed, with which inputs, and every file
//! the run produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    /// Digests of input artifacts, keyed by role (`weights`, `dataset`, ...).
    pub input_digests: BTreeMap<String, String>,
    /// Files written by the run, relative to the run directory.
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_digest: &str) -> Self {
        RunManifest {
            schema_version: 1,
            command: command.to_string(),
            seed,
            config_digest: config_digest.to_string(),
            input_digests: BTreeMap::new(),
            outputs: Vec::new(),
            wall_clock_secs: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.input_digests
            .insert(role.to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Writes `manifest.json` into the run directory.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}

/// SHA-256 of a file's bytes, or of every file (sorted) under a directory.
pub fn file_digest(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(crate::error::Error::MissingArtifact(format!(
            "{}",
            path.display()
        )));
    }
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for entry in entries {
            hasher.update(entry.file_name().unwrap().to_string_lossy().as_bytes());
            hasher.update(std::fs::read(&entry)?);
        }
    } else {
        hasher.update(std::fs::read(path)?);
    }
    Ok(hex::encode(hasher.finalize()))
}
