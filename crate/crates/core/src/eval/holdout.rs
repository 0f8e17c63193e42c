use super::play::{play_episodes, Contestant, EvalSettings, PlayedEpisode};
use crate::game::GridConfig;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpponentBreakdown {
    pub opponent: String,
    pub episodes: u64,
    pub mean_return: f64,
    pub win_rate: f64,
}

/// Outcome of playing one subject against a hold-out set.
#[derive(Debug, Clone, Serialize)]
pub struct HoldoutReport {
    pub subject: String,
    pub preset: String,
    pub config_hash: String,
    pub episodes: u64,
    pub mean_return: f64,
    /// Victory counts 1, defeat 0, a tie or timeout 0.5.
    pub win_rate: f64,
    /// Mean number of confrontations won per episode.
    pub victories_per_episode: f64,
    /// Fraction of the subject's confrontations it won.
    pub victory_fraction: f64,
    /// Mean pickups of rock, paper and scissors per episode.
    pub pickups: [f64; 3],
    pub by_opponent: Vec<OpponentBreakdown>,
    /// Per-episode `(game seed, return, opponent)` for replaying.
    #[serde(skip)]
    pub per_episode: Vec<(u64, f64, String)>,
    #[serde(skip)]
    pub played: Vec<PlayedEpisode>,
}

fn score(ret: f64) -> f64 {
    if ret > 0.0 {
        1.0
    } else if ret < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Plays `subject` in a random seat against uniformly drawn `opponents`
/// (one draw per remaining seat) using environment rewards only.
pub fn evaluate_vs_holdout(
    grid: &Arc<GridConfig>,
    subject: &Contestant,
    opponents: &[Contestant],
    episodes: u64,
    settings: &EvalSettings,
) -> Result<HoldoutReport> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    if opponents.is_empty() {
        return Err(Error::Usage("evaluation needs at least one opponent".into()));
    }
    let mut all = vec![subject.clone()];
    all.extend(opponents.iter().cloned());
    let n = grid.num_players;
    let k = opponents.len();
    let played = play_episodes(
        grid,
        &all,
        |r| {
            let mut seats = vec![0];
            seats.extend((1..n).map(|_| 1 + r.random_range(0..k)));
            seats.shuffle(r);
            seats
        },
        episodes,
        settings,
    )?;

    let mut total_return = 0.0;
    let mut total_score = 0.0;
    let mut victories = 0u64;
    let mut confrontations = 0u64;
    let mut pickups = [0u64; 3];
    let mut per_opp = vec![(0u64, 0.0f64, 0.0f64); k];
    let mut per_episode = Vec::with_capacity(played.len());
    for ep in &played {
        let seat = ep.contestants.iter().position(|&c| c == 0).expect("subject seated");
        let s = &ep.record.seats[seat];
        total_return += s.env_return;
        total_score += score(s.env_return);
        victories += s.victories as u64;
        confrontations += s.confrontations as u64;
        for (t, p) in pickups.iter_mut().zip(s.pickups) {
            *t += p as u64;
        }
        // Credit the episode to every opponent present (once each).
        let mut present: Vec<usize> = ep.contestants.iter().filter(|&&c| c != 0).map(|&c| c - 1).collect();
        present.sort();
        present.dedup();
        for o in &present {
            per_opp[*o].0 += 1;
            per_opp[*o].1 += s.env_return;
            per_opp[*o].2 += score(s.env_return);
        }
        let opp_label = present.iter().map(|&o| opponents[o].label()).collect::<Vec<_>>().join("+");
        per_episode.push((ep.record.game_seed, s.env_return, opp_label));
    }
    let e = played.len() as f64;
    Ok(HoldoutReport {
        subject: subject.label(),
        preset: grid.name.clone(),
        config_hash: grid.config_hash(),
        episodes: played.len() as u64,
        mean_return: total_return / e,
        win_rate: total_score / e,
        victories_per_episode: victories as f64 / e,
        victory_fraction: if confrontations == 0 { 0.0 } else { victories as f64 / confrontations as f64 },
        pickups: pickups.map(|p| p as f64 / e),
        by_opponent: opponents
            .iter()
            .zip(&per_opp)
            .map(|(o, &(n, r, w))| OpponentBreakdown {
                opponent: o.label(),
                episodes: n,
                mean_return: if n == 0 { 0.0 } else { r / n as f64 },
                win_rate: if n == 0 { 0.0 } else { w / n as f64 },
            })
            .collect(),
        per_episode,
        played,
    })
}

impl HoldoutReport {
    /// Summary row plus one row per opponent.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["subject", "opponent", "episodes", "mean_return", "win_rate", "config_hash"]).map_err(err)?;
        w.write_record([
            self.subject.as_str(),
            "all",
            &self.episodes.to_string(),
            &self.mean_return.to_string(),
            &self.win_rate.to_string(),
            &self.config_hash,
        ])
        .map_err(err)?;
        for o in &self.by_opponent {
            w.write_record([
                self.subject.as_str(),
                &o.opponent,
                &o.episodes.to_string(),
                &o.mean_return.to_string(),
                &o.win_rate.to_string(),
                &self.config_hash,
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per episode: seed, return and opponents, enough to replay it.
    pub fn write_episodes_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["index", "game_seed", "return", "opponents"]).map_err(err)?;
        for (i, (seed, ret, opp)) in self.per_episode.iter().enumerate() {
            w.write_record([i.to_string(), seed.to_string(), ret.to_string(), opp.clone()]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}
