use super::config::{Schedule, TrainConfig};
use super::learner::Learner;
use super::matchmaker::{MatchMode, Matchmaker};
use super::queue::TrajectoryQueue;
use super::runner::{ActorPolicy, EpisodeRecord, Runner, SeatSpec};
use super::storage::AgentMetadata;
use super::PseudorewardSpec;
use crate::game::{GridConfig, ResourceKind};
use crate::learning::{MetricsRow, Sequence};
use crate::model::AgentNet;
use crate::rng;
use crate::tensor::ParameterStore;
use crate::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub id: String,
    pub seed: u64,
    pub pseudoreward: Option<PseudorewardSpec>,
}

/// What happened during one lockstep round.
#[derive(Debug, Default)]
pub struct RoundReport {
    pub round: u64,
    pub updates: Vec<MetricsRow>,
    pub episodes: Vec<EpisodeRecord>,
    /// Parameter version behind each sequence handed to the learners.
    pub sequence_versions: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedAgent {
    pub agent_id: String,
    pub seed: u64,
    pub steps: u64,
    pub checkpoint: Option<PathBuf>,
}

struct Worker {
    runner: Runner,
    matches: Matchmaker,
    policies: Vec<ActorPolicy>,
    log: Option<std::io::BufWriter<std::fs::File>>,
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    actor: usize,
    episode: u64,
    game_seed: u64,
    length: u32,
    seats: Vec<String>,
    returns: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<&'a str>,
}

/// Sequences tagged with their learner index, and the finished episodes.
type SliceOutput = (Vec<(usize, Sequence)>, Vec<EpisodeRecord>);

impl Worker {
    /// Plays one slice of `unroll` steps.
    fn slice(&mut self, index: usize, unroll: usize, ids: &[String], hash: &str) -> Result<SliceOutput> {
        let mut seqs = Vec::new();
        let mut episodes = Vec::new();
        for _ in 0..unroll {
            let out = self.runner.step(&self.policies, &mut self.matches)?;
            seqs.extend(out.sequences);
            episodes.extend(out.episodes);
        }
        if let Some(log) = &mut self.log {
            for e in &episodes {
                let line = EpisodeLine {
                    actor: index,
                    episode: e.episode,
                    game_seed: e.game_seed,
                    length: e.length,
                    seats: e.seats.iter().map(|s| s.seat.label(ids)).collect(),
                    returns: e.seats.iter().map(|s| s.env_return).collect(),
                    config_hash: Some(hash),
                };
                serde_json::to_writer(&mut *log, &line)?;
                log.write_all(b"\n")?;
            }
            log.flush()?;
        }
        Ok((seqs, episodes))
    }

    fn refresh(&mut self, snapshots: &[Arc<ParameterStore<f32>>]) {
        for (p, s) in self.policies.iter_mut().zip(snapshots) {
            p.params = s.clone();
        }
    }
}

/// A population of same-architecture agents trained together.
pub struct Session {
    cfg: TrainConfig,
    grid: Arc<GridConfig>,
    net: Arc<AgentNet>,
    specs: Vec<AgentSpec>,
    learners: Vec<Learner>,
    workers: Vec<Worker>,
    round: u64,
    run_dir: Option<PathBuf>,
    config_hash: String,
}

impl Session {
    pub fn new(cfg: TrainConfig, specs: Vec<AgentSpec>, run_dir: Option<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        if specs.is_empty() {
            return Err(Error::Config("a session needs at least one agent".into()));
        }
        let grid = Arc::new(cfg.grid()?);
        let arch = cfg.arch_for(&grid);
        let net = Arc::new(AgentNet::new(cfg.variant, arch)?);
        let config_hash = cfg.config_hash();
        let arch_hash = hex::encode(net.arch_hash());
        let mut learners = Vec::with_capacity(specs.len());
        for spec in &specs {
            let params = net.init(&mut rng::derive(spec.seed, &[0]))?;
            let mut l = Learner::new(
                spec.id.clone(),
                spec.seed,
                net.clone(),
                params,
                cfg.loss.clone(),
                cfg.optimizer.clone(),
                cfg.batch_size,
                cfg.unroll,
            )?;
            if let Some(run) = &run_dir {
                let meta = AgentMetadata {
                    format_version: 1,
                    agent_id: spec.id.clone(),
                    variant: cfg.variant,
                    seed: spec.seed,
                    config_hash: config_hash.clone(),
                    preset: grid.name.clone(),
                    game_hash: grid.config_hash(),
                    arch: net.arch().clone(),
                    arch_hash: arch_hash.clone(),
                    pseudoreward: spec.pseudoreward,
                };
                l.attach_dir(run.join(&spec.id), &meta)?;
            }
            learners.push(l);
        }
        let population: Vec<usize> = (0..specs.len()).collect();
        let matches = match cfg.mode {
            MatchMode::SelfPlayPool => Matchmaker::self_play(population),
            MatchMode::FixedOpponents => Matchmaker::fixed(population, cfg.opponents.clone()),
        };
        let policies: Vec<ActorPolicy> = specs
            .iter()
            .zip(&learners)
            .map(|(s, l)| ActorPolicy {
                record: true,
                pseudoreward: s.pseudoreward,
                ..ActorPolicy::new(net.clone(), l.snapshot())
            })
            .collect();
        let mut workers = Vec::with_capacity(cfg.num_actors);
        for w in 0..cfg.num_actors {
            let seed = rng::derive_seed(cfg.seed, &[1, w as u64]);
            let log = match &run_dir {
                Some(run) => {
                    std::fs::create_dir_all(run)?;
                    let f = std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(run.join(format!("episodes_actor{w}.jsonl")))?;
                    Some(std::io::BufWriter::new(f))
                }
                None => None,
            };
            workers.push(Worker {
                runner: Runner::new(grid.clone(), cfg.envs_per_actor, seed, cfg.unroll, cfg.bots),
                matches: matches.clone(),
                policies: policies.clone(),
                log,
            });
        }
        Ok(Session { cfg, grid, net, specs, learners, workers, round: 0, run_dir, config_hash })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<GridConfig> {
        &self.grid
    }

    pub fn net(&self) -> &Arc<AgentNet> {
        &self.net
    }

    pub fn learners(&self) -> &[Learner] {
        &self.learners
    }

    pub fn learner_mut(&mut self, i: usize) -> &mut Learner {
        &mut self.learners[i]
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.id.clone()).collect()
    }

    /// Evaluation policy for agent `i`: current parameters, no shaping, no
    /// recording.
    pub fn policy(&self, i: usize) -> ActorPolicy {
        ActorPolicy::new(self.net.clone(), self.learners[i].snapshot())
    }

    /// Environment frames simulated by all actors.
    pub fn frames(&self) -> u64 {
        self.workers.iter().map(|w| w.runner.frames()).sum()
    }

    pub fn done(&self) -> bool {
        self.learners.iter().all(|l| l.steps() >= self.cfg.max_steps)
    }

    fn snapshots(&self) -> Vec<Arc<ParameterStore<f32>>> {
        self.learners.iter().map(Learner::snapshot).collect()
    }

    /// One lockstep round: every actor plays a slice with the current
    /// snapshots, then every learner trains on whatever full batches it has.
    /// The result depends only on the configuration and seeds.
    pub fn round(&mut self) -> Result<RoundReport> {
        if self.round.is_multiple_of(self.cfg.sync_period as u64) {
            let snaps = self.snapshots();
            for w in &mut self.workers {
                w.refresh(&snaps);
            }
        }
        let unroll = self.cfg.unroll;
        let threads = self.cfg.threads.min(self.workers.len()).max(1);
        let ids = self.agent_ids();
        let hash = self.config_hash.clone();
        let results: Vec<Result<SliceOutput>> = if threads == 1 {
            self.workers.iter_mut().enumerate().map(|(i, w)| w.slice(i, unroll, &ids, &hash)).collect()
        } else {
            let per = self.workers.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .workers
                    .chunks_mut(per)
                    .enumerate()
                    .map(|(c, chunk)| {
                        let (ids, hash) = (&ids, &hash);
                        s.spawn(move || {
                            chunk
                                .iter_mut()
                                .enumerate()
                                .map(|(j, w)| w.slice(c * per + j, unroll, ids, hash))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("actor thread panicked")).collect()
            })
        };
        let mut report = RoundReport { round: self.round, ..Default::default() };
        for r in results {
            let (seqs, episodes) = r?;
            for (agent, seq) in seqs {
                report.sequence_versions.push(seq.version);
                self.learners[agent].push(seq);
            }
            report.episodes.extend(episodes);
        }

        let max_steps = self.cfg.max_steps;
        let every = self.cfg.checkpoint_every;
        let train = |l: &mut Learner| -> Result<Vec<MetricsRow>> {
            let mut rows = Vec::new();
            while l.ready() && l.steps() < max_steps {
                rows.push(l.update()?);
                if every > 0 && l.updates().is_multiple_of(every) && l.dir().is_some() {
                    l.save()?;
                }
            }
            Ok(rows)
        };
        let threads = self.cfg.threads.min(self.learners.len()).max(1);
        let rows: Vec<Result<Vec<MetricsRow>>> = if threads == 1 {
            self.learners.iter_mut().map(train).collect()
        } else {
            let per = self.learners.len().div_ceil(threads);
            std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .learners
                    .chunks_mut(per)
                    .map(|chunk| s.spawn(move || chunk.iter_mut().map(train).collect::<Vec<_>>()))
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("learner thread panicked")).collect()
            })
        };
        for r in rows {
            report.updates.extend(r?);
        }
        self.round += 1;
        Ok(report)
    }

    /// Runs lockstep rounds until every learner reaches `max_steps` or the
    /// callback returns `true`.
    pub fn run_lockstep(&mut self, mut on_round: impl FnMut(&Session, &RoundReport) -> Result<bool>) -> Result<()> {
        while !self.done() {
            let report = self.round()?;
            if on_round(self, &report)? {
                break;
            }
        }
        Ok(())
    }

    /// Free-running actor and learner threads connected by bounded queues.
    /// Actors refresh snapshots every `sync_period` slices; learners publish
    /// a new snapshot after each update. Not bit-reproducible.
    pub fn run_async(&mut self) -> Result<()> {
        let n = self.learners.len();
        let queues: Vec<TrajectoryQueue<Sequence>> =
            (0..n).map(|_| TrajectoryQueue::new(self.cfg.queue_capacity, self.cfg.full_policy)).collect();
        let snapshots = RwLock::new(self.snapshots());
        let stop = AtomicBool::new(false);
        let finished = AtomicUsize::new(0);
        let first_error: Mutex<Option<Error>> = Mutex::new(None);
        let (unroll, sync, max_steps, every) =
            (self.cfg.unroll, self.cfg.sync_period, self.cfg.max_steps, self.cfg.checkpoint_every);
        let stall = Duration::from_secs(self.cfg.stall_timeout_secs.max(1));
        let ids = self.agent_ids();
        let hash = self.config_hash.clone();
        let shutdown = || {
            stop.store(true, Ordering::SeqCst);
            for q in &queues {
                q.close();
            }
        };
        let fail = |e: Error| {
            first_error.lock().expect("error lock").get_or_insert(e);
            shutdown();
        };

        std::thread::scope(|s| {
            for (wi, w) in self.workers.iter_mut().enumerate() {
                let (queues, snapshots, stop, ids, hash, fail) = (&queues, &snapshots, &stop, &ids, &hash, &fail);
                s.spawn(move || {
                    let mut slices = 0usize;
                    while !stop.load(Ordering::SeqCst) {
                        if slices.is_multiple_of(sync) {
                            w.refresh(&snapshots.read().expect("snapshot lock"));
                        }
                        slices += 1;
                        let (seqs, _) = match w.slice(wi, unroll, ids, hash) {
                            Ok(r) => r,
                            Err(e) => return fail(e),
                        };
                        for (agent, seq) in seqs {
                            if queues[agent].push(seq.version, seq).is_err() {
                                return;
                            }
                        }
                    }
                });
            }
            for (li, l) in self.learners.iter_mut().enumerate() {
                let (queues, snapshots, finished, shutdown, fail) = (&queues, &snapshots, &finished, &shutdown, &fail);
                s.spawn(move || {
                    let mut done = l.steps() >= max_steps;
                    if done && finished.fetch_add(1, Ordering::SeqCst) + 1 == n {
                        shutdown();
                    }
                    loop {
                        match queues[li].pop_timeout(stall) {
                            Err(_) => return,
                            Ok(None) => log::warn!("learner {} stalled: no data for {:?}", l.id, stall),
                            Ok(Some(v)) if !done => l.push(v.item),
                            Ok(Some(_)) => {}
                        }
                        while !done && l.ready() {
                            if let Err(e) = l.update() {
                                return fail(e);
                            }
                            snapshots.write().expect("snapshot lock")[li] = l.snapshot();
                            if every > 0 && l.updates().is_multiple_of(every) && l.dir().is_some() {
                                if let Err(e) = l.save() {
                                    return fail(e);
                                }
                            }
                            if l.steps() >= max_steps {
                                done = true;
                                if finished.fetch_add(1, Ordering::SeqCst) + 1 == n {
                                    shutdown();
                                }
                            }
                        }
                    }
                });
            }
        });
        match first_error.into_inner().expect("error lock") {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Trains per the configured schedule.
    pub fn train(&mut self) -> Result<()> {
        match self.cfg.schedule {
            Schedule::Lockstep => self.run_lockstep(|_, _| Ok(false)),
            Schedule::Async => self.run_async(),
        }
    }

    /// Saves a final checkpoint for every agent with an output directory.
    pub fn finish(&mut self) -> Result<Vec<TrainedAgent>> {
        let mut out = Vec::with_capacity(self.learners.len());
        for l in &mut self.learners {
            let checkpoint = if l.dir().is_some() { Some(l.save()?) } else { None };
            l.flush()?;
            out.push(TrainedAgent { agent_id: l.id.clone(), seed: l.seed, steps: l.steps(), checkpoint });
        }
        for w in &mut self.workers {
            if let Some(log) = &mut w.log {
                log.flush()?;
            }
        }
        Ok(out)
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.run_dir.as_deref()
    }

    pub fn seats_label(&self, seat: SeatSpec) -> String {
        seat.label(&self.agent_ids())
    }
}

/// Agents of one repeat of a population run, each with its own seed.
pub fn population_specs(cfg: &TrainConfig, repeat: usize) -> Vec<AgentSpec> {
    (0..cfg.num_seeds)
        .map(|s| AgentSpec {
            id: format!("{}_r{repeat}_s{s}", cfg.variant.id()),
            seed: rng::derive_seed(cfg.seed, &[2, repeat as u64, s as u64]),
            pseudoreward: None,
        })
        .collect()
}

pub fn repeat_dir(run_dir: &Path, repeat: usize) -> PathBuf {
    run_dir.join(format!("repeat_{repeat}"))
}

/// `num_seeds` same-variant agents per repeat, each repeat its own session.
pub fn train_population(cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<Vec<TrainedAgent>> {
    let mut out = Vec::new();
    for r in 0..cfg.repeats {
        let mut session = Session::new(cfg.clone(), population_specs(cfg, r), run_dir.map(|d| repeat_dir(d, r)))?;
        session.train()?;
        out.extend(session.finish()?);
    }
    Ok(out)
}

/// Agent specs of the hold-out population: four shaped agents per resource
/// kind and two unshaped ones.
pub fn holdout_specs(seed: u64) -> Vec<AgentSpec> {
    let mut specs = Vec::with_capacity(14);
    for kind in ResourceKind::ALL {
        for i in 0..4 {
            specs.push(AgentSpec {
                id: format!("holdout_{}_{i}", kind.name()),
                seed: rng::derive_seed(seed, &[3, kind.index() as u64, i]),
                pseudoreward: Some(PseudorewardSpec::new(kind)),
            });
        }
    }
    for i in 0..2 {
        specs.push(AgentSpec {
            id: format!("holdout_plain_{i}"),
            seed: rng::derive_seed(seed, &[3, 3, i]),
            pseudoreward: None,
        });
    }
    specs
}

/// The 14-agent hold-out population trained in one shared self-play pool.
pub fn train_holdout_population(cfg: &TrainConfig, run_dir: Option<&Path>) -> Result<Vec<TrainedAgent>> {
    let cfg = TrainConfig { mode: MatchMode::SelfPlayPool, ..cfg.clone() };
    let mut session = Session::new(cfg.clone(), holdout_specs(cfg.seed), run_dir.map(Path::to_path_buf))?;
    session.train()?;
    session.finish()
}
