//! Actor-learner training: vectorised actors, bounded queues, versioned
//! parameter snapshots, self-play matchmaking and pseudorewards.

mod config;
mod learner;
mod matchmaker;
mod queue;
mod runner;
mod session;
mod storage;

pub use config::{Schedule, TrainConfig};
pub use learner::Learner;
pub use matchmaker::{MatchMode, Matchmaker};
pub use queue::{FullPolicy, TrajectoryQueue, Versioned};
pub use runner::{ActorPolicy, EpisodeRecord, MatchSource, Runner, SeatSpec, SeatStats, StepOutput};
pub use session::{holdout_specs, population_specs, repeat_dir, train_holdout_population, train_population, AgentSpec, RoundReport, Session, TrainedAgent};
pub use storage::{checkpoint_path, write_atomic, latest_checkpoint, load_agent, AgentMetadata, LoadedAgent, METADATA_FILE};

use crate::game::ResourceKind;
use serde::{Deserialize, Serialize};

/// Shaping reward for training pure-strategy agents: a bonus for picking
/// up the target kind and a penalty for any other kind. Training only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudorewardSpec {
    pub target: ResourceKind,
    pub bonus: f64,
    pub penalty: f64,
}

impl PseudorewardSpec {
    pub fn new(target: ResourceKind) -> Self {
        PseudorewardSpec { target, bonus: 10.0, penalty: -5.0 }
    }

    /// Shaping added for one pickup of `kind`.
    pub fn bonus(&self, kind: ResourceKind) -> f64 {
        if kind == self.target {
            self.bonus
        } else {
            self.penalty
        }
    }
}
