//! Agent networks: OPRE, its ablations and the flat baselines.
//!
//! Every network is a pure function of a [`ParameterStore`] and its inputs.
//! The actor entry points take only the agent's own observations; concealed
//! observations (other players' views) reach the network exclusively through
//! [`AgentNet::unroll`], which only learners call.

mod features;
mod net;

pub use features::{obs_features, EXTRA_FEATURES, OBS_FEATURES, WINDOW_FEATURES};
pub use net::{ActorOutput, AgentNet, NetworkOutput, SequenceInputs, StepVars};

use crate::tensor::ParameterStore;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    /// Value factorised over q(z|x'), options trained by the target-policy
    /// gradient with q stopped, p trained by KL(q||p).
    Opre,
    /// OPRE plus a behaviour-policy gradient into the options.
    OpreMixPg,
    /// OPRE without the stop-gradient into q.
    OpreQGrad,
    /// Mixture policy over options trained by plain policy gradient.
    PureMix,
    Baseline,
    /// Critic also sees the pooled concealed-information embedding.
    BaselineCc,
    /// Auxiliary head predicting opponents' inventories.
    BaselineAux,
    /// Factorised OPRE critic with a monolithic policy.
    BaselineCcFact,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 8] = [
        AgentVariant::Opre,
        AgentVariant::OpreMixPg,
        AgentVariant::OpreQGrad,
        AgentVariant::PureMix,
        AgentVariant::Baseline,
        AgentVariant::BaselineCc,
        AgentVariant::BaselineAux,
        AgentVariant::BaselineCcFact,
    ];

    pub fn id(self) -> &'static str {
        match self {
            AgentVariant::Opre => "opre",
            AgentVariant::OpreMixPg => "opre_mix_pg",
            AgentVariant::OpreQGrad => "opre_q_grad",
            AgentVariant::PureMix => "pure_mix",
            AgentVariant::Baseline => "baseline",
            AgentVariant::BaselineCc => "baseline_cc",
            AgentVariant::BaselineAux => "baseline_aux",
            AgentVariant::BaselineCcFact => "baseline_cc_fact",
        }
    }

    /// Variants whose behaviour policy is a mixture over options.
    pub fn has_options(self) -> bool {
        matches!(self, AgentVariant::Opre | AgentVariant::OpreMixPg | AgentVariant::OpreQGrad | AgentVariant::PureMix)
    }

    /// Variants with a q-network over concealed observations.
    pub fn has_q(self) -> bool {
        matches!(
            self,
            AgentVariant::Opre | AgentVariant::OpreMixPg | AgentVariant::OpreQGrad | AgentVariant::BaselineCcFact
        )
    }

    pub fn is_opre(self) -> bool {
        matches!(self, AgentVariant::Opre | AgentVariant::OpreMixPg | AgentVariant::OpreQGrad)
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AgentVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|v| v.id() == norm)
            .ok_or_else(|| crate::Error::Config(format!("unknown agent variant {s:?}")))
    }
}

/// Layer sizes. Defaults follow the published architecture: a 6-channel
/// conv, an MLP of (64, 64), a 128-unit LSTM and 16 option heads with 128
/// hidden units each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub num_options: usize,
    pub conv_channels: usize,
    pub conv_width: usize,
    pub mlp: [usize; 2],
    pub lstm_hidden: usize,
    pub head_hidden: usize,
    /// Per-opponent embedding width of the concealed-information encoder.
    pub concealed_embed: usize,
    pub concealed_hidden: usize,
    /// Other players per game (1 for RWS, 4 for RPS Arena).
    pub num_opponents: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            num_options: 16,
            conv_channels: 6,
            conv_width: 3,
            mlp: [64, 64],
            lstm_hidden: 128,
            head_hidden: 128,
            concealed_embed: 64,
            concealed_hidden: 64,
            num_opponents: 1,
        }
    }
}

impl ArchConfig {
    pub fn for_players(num_players: usize) -> Self {
        ArchConfig { num_opponents: num_players.saturating_sub(1), ..Default::default() }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.num_options < 2 {
            return Err(crate::Error::Config("num_options must be at least 2".into()));
        }
        if self.conv_width == 0 || self.conv_width > 16 {
            return Err(crate::Error::Config("conv_width must be in 1..=16".into()));
        }
        if self.num_opponents == 0 {
            return Err(crate::Error::Config("num_opponents must be positive".into()));
        }
        Ok(())
    }
}

/// SHA-256 over variant, layer sizes and every parameter's name and shape.
pub fn architecture_hash(variant: AgentVariant, arch: &ArchConfig, params: &ParameterStore<f32>) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(variant.id().as_bytes());
    h.update(serde_json::to_vec(arch).expect("ArchConfig serializes"));
    for (name, t) in params.iter() {
        h.update(name.as_bytes());
        h.update((t.rows() as u64).to_le_bytes());
        h.update((t.cols() as u64).to_le_bytes());
    }
    h.finalize().into()
}
