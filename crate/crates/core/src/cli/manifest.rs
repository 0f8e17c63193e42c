use crate::harness::write_atomic;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one command invocation, written when it starts and
/// rewritten when it ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    /// Crate version plus a digest of the configuration.
    pub artifact_version: String,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(dir: &Path, run_id: &str, command: &str, config_hash: &str, seeds: Vec<u64>) -> Result<Self> {
        let m = RunManifest {
            run_id: run_id.to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            artifact_version: format!("{}+{}", env!("CARGO_PKG_VERSION"), &config_hash[..config_hash.len().min(12)]),
            seeds,
            started_unix: now(),
            finished_unix: None,
            outputs: Vec::new(),
        };
        m.write(dir)?;
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(self)?)
    }

    pub fn finish(mut self, dir: &Path, outputs: Vec<PathBuf>) -> Result<Self> {
        self.finished_unix = Some(now());
        self.outputs = outputs;
        self.write(dir)?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(crate::Error::Missing(path));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
