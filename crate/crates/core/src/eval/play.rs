use super::BotConfig;
use crate::game::{GridConfig, ResourceKind};
use crate::harness::{ActorPolicy, EpisodeRecord, MatchSource, Runner, SeatSpec};
use crate::rng::{self, Rng};
use crate::{Error, Result};
use std::sync::Arc;

/// Anything that can occupy a seat during evaluation.
#[derive(Debug, Clone)]
pub enum Contestant {
    Policy { id: String, policy: ActorPolicy },
    Bot(ResourceKind),
    Random,
}

impl Contestant {
    pub fn label(&self) -> String {
        match self {
            Contestant::Policy { id, .. } => id.clone(),
            Contestant::Bot(k) => format!("bot_{}", k.name()),
            Contestant::Random => "random".into(),
        }
    }

    /// The three scripted pure strategies.
    pub fn scripted_set() -> Vec<Contestant> {
        ResourceKind::ALL.iter().map(|&k| Contestant::Bot(k)).collect()
    }
}

/// Shared knobs for every evaluation routine.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub seed: u64,
    pub bots: BotConfig,
    pub threads: usize,
    /// Environments stepped together per shard.
    pub envs: usize,
    /// Record a replay of every episode.
    pub replays: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { seed: 0, bots: BotConfig::default(), threads: 1, envs: 8, replays: false }
    }
}

/// Episodes are split over this many independently seeded shards so that
/// results do not depend on the thread count.
const SHARDS: u64 = 8;

/// An evaluated episode with the contestant index of every seat.
#[derive(Debug, Clone)]
pub struct PlayedEpisode {
    pub record: EpisodeRecord,
    pub contestants: Vec<usize>,
}

/// Plays `episodes` episodes whose seats come from `seats(rng)`, an
/// assignment of contestant indices to seats. Episodes come back ordered by
/// shard, then episode.
pub fn play_episodes<F>(
    grid: &Arc<GridConfig>,
    contestants: &[Contestant],
    seats: F,
    episodes: u64,
    settings: &EvalSettings,
) -> Result<Vec<PlayedEpisode>>
where
    F: Fn(&mut Rng) -> Vec<usize> + Sync,
{
    let mut agents = Vec::new();
    let mut specs = Vec::with_capacity(contestants.len());
    for c in contestants {
        specs.push(match c {
            Contestant::Policy { policy, .. } => {
                agents.push(ActorPolicy { record: false, pseudoreward: None, ..policy.clone() });
                SeatSpec::Agent(agents.len() - 1)
            }
            Contestant::Bot(k) => SeatSpec::Bot(*k),
            Contestant::Random => SeatSpec::Random,
        });
    }
    let labels: Vec<String> = contestants.iter().filter(|c| matches!(c, Contestant::Policy { .. })).map(Contestant::label).collect();
    let n = grid.num_players;
    let run_shard = |shard: u64| -> Result<Vec<PlayedEpisode>> {
        let count = episodes / SHARDS + u64::from(shard < episodes % SHARDS);
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut runner = Runner::new(grid.clone(), settings.envs, rng::derive_seed(settings.seed, &[shard]), 1, settings.bots);
        if settings.replays {
            runner.record_replays(labels.clone());
        }
        // The runner asks for one match per episode, in episode order.
        let mut assigned: Vec<Vec<usize>> = Vec::new();
        let mut source = |r: &mut Rng, _players: usize| -> Vec<SeatSpec> {
            let idx = seats(r);
            let spec = idx.iter().map(|&i| specs[i]).collect();
            assigned.push(idx);
            spec
        };
        let records = runner.run_episodes(&agents, &mut source as &mut dyn MatchSource, count)?;
        Ok(records
            .into_iter()
            .map(|record| {
                let contestants = assigned[record.episode as usize].clone();
                PlayedEpisode { record, contestants }
            })
            .collect())
    };
    let mut check = rng::from_seed(0);
    let probe = seats(&mut check);
    if probe.len() != n || probe.iter().any(|&i| i >= contestants.len()) {
        return Err(Error::Usage(format!("seat assignment must name {n} valid contestants")));
    }
    let threads = settings.threads.clamp(1, SHARDS as usize);
    let results: Vec<Result<Vec<PlayedEpisode>>> = if threads == 1 {
        (0..SHARDS).map(run_shard).collect()
    } else {
        let next = std::sync::atomic::AtomicU64::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<Vec<PlayedEpisode>>>>> =
            (0..SHARDS).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let shard = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if shard >= SHARDS {
                        break;
                    }
                    *slots[shard as usize].lock().expect("slot") = Some(run_shard(shard));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot").expect("every shard ran")).collect()
    };
    let mut out = Vec::with_capacity(episodes as usize);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
