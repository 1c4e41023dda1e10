//! Append-only run log: one JSON line per command invocation.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const RUN_LOG: &str = "runs.jsonl";

pub fn version_tag() -> String {
    format!("v{}-{}", env!("CARGO_PKG_VERSION"), env!("TINTLINE_GIT_REV"))
}

pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON value serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn timestamp(t: SystemTime) -> String {
    humantime::format_rfc3339_millis(t).to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Collects what a command read and wrote, then appends one record.
pub struct RunRecorder {
    command: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
}

impl RunRecorder {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        RunRecorder {
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
        }
    }

    /// Record the effective configuration once it is known.
    pub fn configure(&mut self, config: Value, seed: Option<u64>) {
        self.config = config;
        self.seed = seed;
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(self, error: Option<String>) -> RunManifest {
        RunManifest {
            config_hash: config_hash(&self.config),
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            version: version_tag(),
            started_at: timestamp(self.started),
            finished_at: timestamp(SystemTime::now()),
            status: if error.is_some() { "error" } else { "ok" }.to_string(),
            error,
        }
    }
}

/// Append `manifest` as one line of `log`, creating the file if needed.
pub fn append(log: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    if let Some(dir) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut line = serde_json::to_vec(manifest).map_err(std::io::Error::other)?;
    line.push(b'\n');
    // A single write on an O_APPEND descriptor keeps concurrent records whole.
    OpenOptions::new().create(true).append(true).open(log)?.write_all(&line)
}

pub fn read_all(log: &Path) -> std::io::Result<Vec<RunManifest>> {
    fs::read_to_string(log)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
