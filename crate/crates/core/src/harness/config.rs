use super::matchmaker::MatchMode;
use super::queue::FullPolicy;
use crate::eval::BotConfig;
use crate::game::{GridConfig, ResourceKind};
use crate::learning::{LossConfig, OptimizerConfig};
use crate::model::{AgentVariant, ArchConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Actors and learners alternate in rounds; bit-reproducible.
    Lockstep,
    /// Actor threads feed learner threads through bounded queues.
    Async,
}

/// Everything a training run needs. Loaded from TOML; every field has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Built-in preset name or path to a preset file.
    pub preset: String,
    pub variant: AgentVariant,
    pub seed: u64,
    pub mode: MatchMode,
    /// Scripted opponents for `fixed_opponents` mode.
    pub opponents: Vec<ResourceKind>,
    pub batch_size: usize,
    pub unroll: usize,
    pub num_actors: usize,
    pub envs_per_actor: usize,
    /// Worker threads; 1 runs everything on the calling thread.
    pub threads: usize,
    /// Actors refresh parameters every this many slices.
    pub sync_period: usize,
    pub queue_capacity: usize,
    pub full_policy: FullPolicy,
    pub schedule: Schedule,
    pub num_seeds: usize,
    pub repeats: usize,
    /// Learner step budget per agent (each update adds `unroll * batch_size`).
    pub max_steps: u64,
    /// Updates between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Seconds a learner may wait for data before logging a stall.
    pub stall_timeout_secs: u64,
    /// In fixed-opponent mode, evaluate every this many frames (0 disables).
    pub eval_every_frames: u64,
    pub eval_episodes: u64,
    pub arch: ArchConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub bots: BotConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: "rws".into(),
            variant: AgentVariant::Opre,
            seed: 0,
            mode: MatchMode::SelfPlayPool,
            opponents: ResourceKind::ALL.to_vec(),
            batch_size: 16,
            unroll: 100,
            num_actors: 8,
            envs_per_actor: 4,
            threads: 1,
            sync_period: 1,
            queue_capacity: 64,
            full_policy: FullPolicy::Block,
            schedule: Schedule::Lockstep,
            num_seeds: 6,
            repeats: 5,
            max_steps: 1_000_000,
            checkpoint_every: 0,
            stall_timeout_secs: 60,
            eval_every_frames: 100_000,
            eval_episodes: 100,
            arch: ArchConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            bots: BotConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(s).map_err(|e| Error::Config(format!("bad training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("unroll", self.unroll),
            ("num_actors", self.num_actors),
            ("envs_per_actor", self.envs_per_actor),
            ("threads", self.threads),
            ("sync_period", self.sync_period),
            ("queue_capacity", self.queue_capacity),
            ("num_seeds", self.num_seeds),
            ("repeats", self.repeats),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.mode == MatchMode::FixedOpponents && self.opponents.is_empty() {
            return Err(Error::Config("fixed_opponents mode needs at least one opponent".into()));
        }
        self.loss.validate()?;
        self.arch.validate()
    }

    pub fn grid(&self) -> Result<GridConfig> {
        GridConfig::load(&self.preset)
    }

    /// Architecture with the opponent count taken from the game.
    pub fn arch_for(&self, grid: &GridConfig) -> ArchConfig {
        ArchConfig { num_opponents: grid.num_players - 1, ..self.arch.clone() }
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
