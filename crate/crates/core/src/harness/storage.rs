//! On-disk layout of a run: `{run}/{agent}/step_{n}.ckpt` next to a
//! `metadata.json` describing the agent.

use super::PseudorewardSpec;
use crate::model::{AgentNet, AgentVariant, ArchConfig};
use crate::tensor::{Checkpoint, ParameterStore};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const METADATA_FILE: &str = "metadata.json";
const METADATA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetadata {
    pub format_version: u32,
    pub agent_id: String,
    pub variant: AgentVariant,
    pub seed: u64,
    /// Hash of the training configuration.
    pub config_hash: String,
    pub preset: String,
    /// Hash of the game configuration.
    pub game_hash: String,
    pub arch: ArchConfig,
    pub arch_hash: String,
    pub pseudoreward: Option<PseudorewardSpec>,
}

impl AgentMetadata {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join(METADATA_FILE), &serde_json::to_vec_pretty(self)?)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(METADATA_FILE);
        if !path.exists() {
            return Err(Error::Missing(path));
        }
        let meta: AgentMetadata = serde_json::from_slice(&std::fs::read(&path)?)?;
        if meta.format_version != METADATA_VERSION {
            return Err(Error::Format(format!("metadata format {} unsupported", meta.format_version)));
        }
        Ok(meta)
    }
}

pub fn checkpoint_path(agent_dir: &Path, step: u64) -> PathBuf {
    agent_dir.join(format!("step_{step}.ckpt"))
}

/// Checkpoint with the highest step in an agent directory.
pub fn latest_checkpoint(agent_dir: &Path) -> Result<PathBuf> {
    let mut best: Option<(u64, PathBuf)> = None;
    let entries = std::fs::read_dir(agent_dir).map_err(|_| Error::Missing(agent_dir.to_path_buf()))?;
    for entry in entries {
        let path = entry?.path();
        let step = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step_"))
            .and_then(|n| n.strip_suffix(".ckpt"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(step) = step {
            if best.as_ref().is_none_or(|(b, _)| step > *b) {
                best = Some((step, path));
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| Error::Missing(agent_dir.join("step_*.ckpt")))
}

/// A trained agent ready for evaluation.
#[derive(Debug, Clone)]
pub struct LoadedAgent {
    pub meta: AgentMetadata,
    pub net: Arc<AgentNet>,
    pub params: Arc<ParameterStore<f32>>,
    pub checkpoint: Checkpoint,
    pub path: PathBuf,
}

/// Loads an agent from a checkpoint file or from an agent directory (latest
/// checkpoint). Optimizer moments are ignored; the architecture hash must
/// match the metadata.
pub fn load_agent(path: &Path) -> Result<LoadedAgent> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), latest_checkpoint(path)?)
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let meta = AgentMetadata::read(&dir)?;
    let net = AgentNet::new(meta.variant, meta.arch.clone())?;
    let checkpoint = Checkpoint::load(&file)?;
    if checkpoint.arch_hash != net.arch_hash() {
        return Err(Error::Format(format!("{}: architecture hash does not match {}", file.display(), meta.variant)));
    }
    let mut params = ParameterStore::new();
    for (name, t) in &checkpoint.arrays {
        if !name.starts_with("opt.") {
            params.insert(name, t.clone())?;
        }
    }
    params.set_version(checkpoint.version);
    net.check_params(&params)?;
    Ok(LoadedAgent { meta, net: Arc::new(net), params: Arc::new(params), checkpoint, path: file })
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
