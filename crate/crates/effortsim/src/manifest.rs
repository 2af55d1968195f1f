//! Output bookkeeping: every emitted file is hashed into the run manifest,
//! except wall-clock timings, which are listed but not hashed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::io::to_json;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputEntry {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes: Option<usize>,
    /// Content varies between runs (timings) and is not hashed.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub volatile: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub notes: BTreeMap<String, String>,
    pub stages: Vec<String>,
    pub outputs: Vec<OutputEntry>,
}

/// Collects files under `root/<command>/` and writes the manifest last.
pub struct RunWriter {
    root: PathBuf,
    command: String,
    files: Vec<(String, Vec<u8>)>,
    stages: Vec<(String, f64)>,
    clock: Instant,
    pub inputs: BTreeMap<String, String>,
    pub notes: BTreeMap<String, String>,
}

impl RunWriter {
    pub fn new(root: &Path, command: &str) -> Self {
        RunWriter {
            root: root.to_path_buf(),
            command: command.to_string(),
            files: Vec::new(),
            stages: Vec::new(),
            clock: Instant::now(),
            inputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn input_file(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        self.input(name, &bytes);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    /// Closes the current stage, recording its wall-clock time.
    pub fn stage(&mut self, name: impl Into<String>) {
        let now = Instant::now();
        self.stages.push((name.into(), (now - self.clock).as_secs_f64()));
        self.clock = now;
    }

    /// Queues `rel` (relative to the command directory).
    pub fn file(&mut self, rel: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), content.into()));
    }

    /// Writes every queued file, `timings.json` and `manifest.json`.
    pub fn finish(self, config_bytes: &[u8], seed: u64) -> Result<RunManifest> {
        let dir = self.root.join(&self.command);
        let mut outputs = Vec::new();
        for (rel, content) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
            }
            fs::write(&path, content).map_err(|e| HarnessError::io(&path, e))?;
            outputs.push(OutputEntry {
                path: format!("{}/{rel}", self.command),
                sha256: Some(sha256_hex(content)),
                bytes: Some(content.len()),
                volatile: false,
            });
        }
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let timings: BTreeMap<&str, f64> = self.stages.iter().map(|(s, t)| (s.as_str(), *t)).collect();
        let timing_path = dir.join("timings.json");
        fs::write(&timing_path, to_json(&timings)).map_err(|e| HarnessError::io(&timing_path, e))?;
        outputs.push(OutputEntry {
            path: format!("{}/timings.json", self.command),
            sha256: None,
            bytes: None,
            volatile: true,
        });
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config_sha256: sha256_hex(config_bytes),
            inputs: self.inputs,
            seed,
            notes: self.notes,
            stages: self.stages.into_iter().map(|(s, _)| s).collect(),
            outputs,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, to_json(&manifest)).map_err(|e| HarnessError::io(&path, e))?;
        Ok(manifest)
    }
}
