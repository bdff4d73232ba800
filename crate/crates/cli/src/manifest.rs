//! Run manifests: what ran, with which inputs, producing which outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::{sha256_hex, write_file, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config_digest: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config_digest: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            config_digest: config_digest.to_string(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: now_ms(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write `manifest.json` next to the run's outputs.
    pub fn write(self, dir: &Path) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            seed: self.seed,
            config_digest: self.config_digest,
            input_digests: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
        write_file(&dir.join("manifest.json"), json.as_bytes())?;
        Ok(manifest)
    }
}
