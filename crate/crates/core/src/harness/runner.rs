use super::PseudorewardSpec;
use crate::eval::{BotConfig, ScriptedBot};
use crate::game::replay::{ReplayHeader, ReplayStep, REPLAY_FORMAT_VERSION};
use crate::game::{Action, Event, GameState, GridConfig, Observation, ResourceKind};
use crate::learning::{Bootstrap, Sequence};
use crate::model::{obs_features, AgentNet, OBS_FEATURES};
use crate::rng::{self, Rng};
use crate::tensor::{sample_categorical, ParameterStore, Tensor};
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Who controls one seat of a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeatSpec {
    /// Index into the runner's agent list.
    Agent(usize),
    Bot(ResourceKind),
    /// Uniformly random actions.
    Random,
}

impl SeatSpec {
    pub fn label(&self, agent_ids: &[String]) -> String {
        match self {
            SeatSpec::Agent(i) => agent_ids.get(*i).cloned().unwrap_or_else(|| format!("agent{i}")),
            SeatSpec::Bot(k) => format!("bot_{}", k.name()),
            SeatSpec::Random => "random".to_string(),
        }
    }
}

/// Chooses the seats of each new episode.
pub trait MatchSource {
    fn sample(&mut self, rng: &mut Rng, num_players: usize) -> Vec<SeatSpec>;
}

impl<F: FnMut(&mut Rng, usize) -> Vec<SeatSpec>> MatchSource for F {
    fn sample(&mut self, rng: &mut Rng, num_players: usize) -> Vec<SeatSpec> {
        self(rng, num_players)
    }
}

/// A neural policy as the actors see it: immutable parameters and the
/// behaviour policy only.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub net: Arc<AgentNet>,
    pub params: Arc<ParameterStore<f32>>,
    /// Replace p with a one-hot on this option.
    pub forced_option: Option<usize>,
    /// Take the most likely action instead of sampling.
    pub greedy: bool,
    /// Record training sequences for this agent.
    pub record: bool,
    pub pseudoreward: Option<PseudorewardSpec>,
}

impl ActorPolicy {
    pub fn new(net: Arc<AgentNet>, params: Arc<ParameterStore<f32>>) -> Self {
        ActorPolicy { net, params, forced_option: None, greedy: false, record: false, pseudoreward: None }
    }
}

/// Per-seat statistics of a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatStats {
    pub seat: SeatSpec,
    /// Sum of environment rewards.
    pub env_return: f64,
    pub pickups: [u32; 3],
    /// Tag actions taken (successful or not).
    pub tag_actions: u32,
    /// Confrontations this seat took part in.
    pub confrontations: u32,
    /// Confrontations with a strictly positive reward for this seat.
    pub victories: u32,
    /// Steps on which another player was inside this seat's window.
    pub scouting: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub game_seed: u64,
    pub length: u32,
    pub seats: Vec<SeatStats>,
    #[serde(skip)]
    pub replay: Option<(ReplayHeader, Vec<ReplayStep>)>,
}

/// Sequences produced during a step, tagged with the agent they belong to.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub sequences: Vec<(usize, Sequence)>,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone)]
struct Builder {
    seq: Sequence,
}

#[derive(Debug, Clone)]
enum Controller {
    Agent { agent: usize, state: Vec<f32>, builder: Option<Builder> },
    Bot(Box<ScriptedBot>),
    Random,
}

#[derive(Debug, Clone)]
struct Slot {
    game: GameState,
    seats: Vec<SeatSpec>,
    ctl: Vec<Controller>,
    rng: Rng,
    stats: Vec<SeatStats>,
    episode: u64,
    game_seed: u64,
    replay: Option<Vec<ReplayStep>>,
}

/// Plays a fixed number of environments in lockstep. Every episode's match,
/// game seed and action sampling derive from `(seed, episode number)`, so
/// results do not depend on how episodes are spread over runners as long as
/// each runner has its own seed.
pub struct Runner {
    config: Arc<GridConfig>,
    slots: Vec<Option<Slot>>,
    seed: u64,
    next_episode: u64,
    unroll: usize,
    bot_cfg: BotConfig,
    frames: u64,
    record_replays: bool,
    agent_ids: Vec<String>,
    /// Stop starting new episodes after this many.
    episode_budget: Option<u64>,
}

impl Runner {
    pub fn new(config: Arc<GridConfig>, num_envs: usize, seed: u64, unroll: usize, bot_cfg: BotConfig) -> Self {
        Runner {
            config,
            slots: vec![None; num_envs.max(1)],
            seed,
            next_episode: 0,
            unroll: unroll.max(1),
            bot_cfg,
            frames: 0,
            record_replays: false,
            agent_ids: Vec::new(),
            episode_budget: None,
        }
    }

    /// Keep a replay of every episode; `agent_ids` label the header.
    pub fn record_replays(&mut self, agent_ids: Vec<String>) {
        self.record_replays = true;
        self.agent_ids = agent_ids;
    }

    pub fn set_episode_budget(&mut self, episodes: u64) {
        self.episode_budget = Some(episodes);
    }

    /// Environment steps simulated so far, summed over slots.
    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn episodes_started(&self) -> u64 {
        self.next_episode
    }

    /// True once the episode budget is spent and every slot is idle.
    pub fn is_idle(&self) -> bool {
        self.slots.iter().all(Option::is_none) && self.episode_budget.is_some_and(|b| self.next_episode >= b)
    }

    fn start_episode(&mut self, agents: &[ActorPolicy], matches: &mut dyn MatchSource) -> Result<Option<Slot>> {
        if self.episode_budget.is_some_and(|b| self.next_episode >= b) {
            return Ok(None);
        }
        let episode = self.next_episode;
        self.next_episode += 1;
        let mut mrng = rng::derive(self.seed, &[episode, 0]);
        let n = self.config.num_players;
        let seats = matches.sample(&mut mrng, n);
        if seats.len() != n {
            return Err(Error::Usage(format!("match has {} seats for {n} players", seats.len())));
        }
        let game_seed = rng::derive_seed(self.seed, &[episode, 1]);
        let game = GameState::reset(self.config.clone(), game_seed)?;
        let mut ctl = Vec::with_capacity(n);
        for (i, s) in seats.iter().enumerate() {
            ctl.push(match *s {
                SeatSpec::Agent(a) => {
                    let policy = agents
                        .get(a)
                        .ok_or_else(|| Error::Usage(format!("match names agent {a}, only {} exist", agents.len())))?;
                    Controller::Agent { agent: a, state: vec![0.0; policy.net.state_width()], builder: None }
                }
                SeatSpec::Bot(k) => {
                    let seed = rng::derive_seed(self.seed, &[episode, 2, i as u64]);
                    Controller::Bot(Box::new(ScriptedBot::new(k, self.bot_cfg, &self.config, seed)))
                }
                SeatSpec::Random => Controller::Random,
            });
        }
        let stats = seats
            .iter()
            .map(|&seat| SeatStats {
                seat,
                env_return: 0.0,
                pickups: [0; 3],
                tag_actions: 0,
                confrontations: 0,
                victories: 0,
                scouting: 0,
            })
            .collect();
        Ok(Some(Slot {
            game,
            seats,
            ctl,
            rng: rng::derive(self.seed, &[episode, 3]),
            stats,
            episode,
            game_seed,
            replay: self.record_replays.then(Vec::new),
        }))
    }

    /// Advances every environment by one step, starting new episodes in idle
    /// slots.
    pub fn step(&mut self, agents: &[ActorPolicy], matches: &mut dyn MatchSource) -> Result<StepOutput> {
        for i in 0..self.slots.len() {
            if self.slots[i].is_none() {
                self.slots[i] = self.start_episode(agents, matches)?;
            }
        }
        let mut out = StepOutput::default();
        let active: Vec<usize> = (0..self.slots.len()).filter(|&i| self.slots[i].is_some()).collect();
        if active.is_empty() {
            return Ok(out);
        }
        let observations: Vec<Vec<Observation>> =
            active.iter().map(|&i| self.slots[i].as_ref().expect("active").game.observations()).collect();

        // Batched actor forward per agent.
        let mut mu: Vec<Vec<Option<Vec<f32>>>> =
            active.iter().map(|&i| vec![None; self.slots[i].as_ref().expect("active").seats.len()]).collect();
        let mut p_first: Vec<Option<(usize, Vec<f32>)>> = vec![None; active.len()];
        for (a, policy) in agents.iter().enumerate() {
            let mut rows = Vec::new();
            for (k, &i) in active.iter().enumerate() {
                let slot = self.slots[i].as_ref().expect("active");
                for (seat, c) in slot.ctl.iter().enumerate() {
                    if matches!(c, Controller::Agent { agent, .. } if *agent == a) {
                        rows.push((k, seat));
                    }
                }
            }
            if rows.is_empty() {
                continue;
            }
            let sw = policy.net.state_width();
            let mut obs = Tensor::zeros(rows.len(), OBS_FEATURES);
            let mut state = Tensor::zeros(rows.len(), sw);
            for (r, &(k, seat)) in rows.iter().enumerate() {
                obs.data_mut()[r * OBS_FEATURES..(r + 1) * OBS_FEATURES]
                    .copy_from_slice(&obs_features(&observations[k][seat]));
                let slot = self.slots[active[k]].as_ref().expect("active");
                if let Controller::Agent { state: s, .. } = &slot.ctl[seat] {
                    state.data_mut()[r * sw..(r + 1) * sw].copy_from_slice(s);
                }
            }
            let res = policy.net.actor_step(&policy.params, &obs, &state, policy.forced_option)?;
            for (r, &(k, seat)) in rows.iter().enumerate() {
                mu[k][seat] = Some(res.mu.row(r).to_vec());
                if let Some(p) = &res.p {
                    if p_first[k].as_ref().is_none_or(|(s, _)| seat < *s) {
                        p_first[k] = Some((seat, p.row(r).to_vec()));
                    }
                }
                let slot = self.slots[active[k]].as_mut().expect("active");
                if let Controller::Agent { state: s, builder, .. } = &mut slot.ctl[seat] {
                    // A parameter refresh closes the open sequence so every
                    // sequence comes from a single version.
                    if builder.as_ref().is_some_and(|b| b.seq.version != policy.params.version()) {
                        let mut seq = builder.take().expect("present").seq;
                        let mut concealed = Vec::with_capacity((observations[k].len() - 1) * OBS_FEATURES);
                        for (j, o) in observations[k].iter().enumerate() {
                            if j != seat {
                                concealed.extend_from_slice(&obs_features(o));
                            }
                        }
                        seq.bootstrap = Some(Bootstrap { obs: obs_features(&observations[k][seat]).to_vec(), concealed });
                        out.sequences.push((a, seq));
                    }
                    if policy.record && builder.is_none() {
                        *builder = Some(Builder {
                            seq: Sequence {
                                version: policy.params.version(),
                                obs: Vec::new(),
                                concealed: Vec::new(),
                                actions: Vec::new(),
                                behavior_probs: Vec::new(),
                                rewards: Vec::new(),
                                opponent_inventories: Vec::new(),
                                initial_state: s.clone(),
                                bootstrap: None,
                            },
                        });
                    }
                    s.copy_from_slice(res.state.row(r));
                }
            }
        }

        for (k, &i) in active.iter().enumerate() {
            let slot = self.slots[i].as_mut().expect("active");
            let n = slot.seats.len();
            let mut actions = Vec::with_capacity(n);
            for seat in 0..n {
                let a = match &mut slot.ctl[seat] {
                    Controller::Agent { agent, .. } => {
                        let probs = mu[k][seat].as_ref().expect("computed above");
                        let idx = if agents[*agent].greedy {
                            argmax(probs)
                        } else {
                            sample_categorical(probs, &mut slot.rng)
                        };
                        Action::from_index(idx).expect("eight actions")
                    }
                    Controller::Bot(bot) => bot.act(&slot.game, seat),
                    Controller::Random => Action::ALL[slot.rng.random_range(0..Action::COUNT)],
                };
                actions.push(a);
            }
            let before = &observations[k];
            let inventories_before: Vec<[f64; 3]> =
                slot.game.players().iter().map(|p| p.inventory.normalized()).collect();
            let outcome = slot.game.step(&actions)?;
            self.frames += 1;

            let mut shaped = outcome.rewards.clone();
            for e in &outcome.events {
                match *e {
                    Event::Pickup { player, kind, .. } => {
                        slot.stats[player].pickups[kind.index()] += 1;
                        if let Controller::Agent { agent, .. } = slot.ctl[player] {
                            if let Some(spec) = agents[agent].pseudoreward {
                                shaped[player] += spec.bonus(kind);
                            }
                        }
                    }
                    Event::Confrontation { tagger, tagged, reward } => {
                        slot.stats[tagger].confrontations += 1;
                        slot.stats[tagged].confrontations += 1;
                        if reward > 0.0 {
                            slot.stats[tagger].victories += 1;
                        } else if reward < 0.0 {
                            slot.stats[tagged].victories += 1;
                        }
                    }
                }
            }
            for seat in 0..n {
                let st = &mut slot.stats[seat];
                st.env_return += outcome.rewards[seat];
                if actions[seat] == Action::Tag {
                    st.tag_actions += 1;
                }
                if before[seat].sees_other_player() {
                    st.scouting += 1;
                }
            }
            if let Some(replay) = &mut slot.replay {
                replay.push(ReplayStep {
                    t: slot.game.step_count() - 1,
                    actions: actions.clone(),
                    events: outcome.events.clone(),
                    p_options: p_first[k].as_ref().map(|(_, p)| p.clone()),
                    p_player: p_first[k].as_ref().map(|(s, _)| *s),
                });
            }

            for seat in 0..n {
                let Controller::Agent { agent, builder, .. } = &mut slot.ctl[seat] else { continue };
                let Some(b) = builder.as_mut() else { continue };
                let seq = &mut b.seq;
                seq.obs.extend_from_slice(&obs_features(&before[seat]));
                for (j, o) in before.iter().enumerate() {
                    if j != seat {
                        seq.concealed.extend_from_slice(&obs_features(o));
                    }
                }
                for (j, inv) in inventories_before.iter().enumerate() {
                    if j != seat {
                        seq.opponent_inventories.extend(inv.iter().map(|v| *v as f32));
                    }
                }
                let probs = mu[k][seat].as_ref().expect("computed above");
                let a = actions[seat].index();
                seq.actions.push(a as u8);
                seq.behavior_probs.push(probs[a].max(f32::MIN_POSITIVE));
                seq.rewards.push(shaped[seat] as f32);
                if outcome.terminated || seq.len() >= self.unroll {
                    let mut seq = builder.take().expect("present").seq;
                    if !outcome.terminated {
                        let after = &outcome.observations;
                        let mut concealed = Vec::with_capacity((n - 1) * OBS_FEATURES);
                        for (j, o) in after.iter().enumerate() {
                            if j != seat {
                                concealed.extend_from_slice(&obs_features(o));
                            }
                        }
                        seq.bootstrap = Some(Bootstrap { obs: obs_features(&after[seat]).to_vec(), concealed });
                    }
                    out.sequences.push((*agent, seq));
                }
            }

            if outcome.terminated {
                let slot = self.slots[i].take().expect("active");
                let replay = slot.replay.map(|steps| {
                    let header = ReplayHeader {
                        format_version: REPLAY_FORMAT_VERSION,
                        preset: self.config.name.clone(),
                        config_hash: self.config.config_hash(),
                        seed: slot.game_seed,
                        policy_ids: slot.seats.iter().map(|s| s.label(&self.agent_ids)).collect(),
                    };
                    (header, steps)
                });
                out.episodes.push(EpisodeRecord {
                    episode: slot.episode,
                    game_seed: slot.game_seed,
                    length: slot.game.step_count(),
                    seats: slot.stats,
                    replay,
                });
            }
        }
        Ok(out)
    }

    /// Steps until `episodes` more episodes have finished; returns them in
    /// episode order.
    pub fn run_episodes(&mut self, agents: &[ActorPolicy], matches: &mut dyn MatchSource, episodes: u64) -> Result<Vec<EpisodeRecord>> {
        self.set_episode_budget(self.next_episode + episodes);
        let mut done = Vec::new();
        while !self.is_idle() {
            done.extend(self.step(agents, matches)?.episodes);
        }
        done.sort_by_key(|e| e.episode);
        Ok(done)
    }
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}
