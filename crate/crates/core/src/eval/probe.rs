use super::play::{play_episodes, Contestant, EvalSettings};
use crate::game::{GridConfig, ResourceKind};
use crate::harness::ActorPolicy;
use crate::model::AgentNet;
use crate::rng;
use crate::tensor::ParameterStore;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::Arc;

/// Statistic names in report order.
pub const PROBE_STATISTICS: [&str; 5] = ["episode_length", "tagging_events", "reward", "collected_resources", "scouting"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Statistics of one (option, opponent) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeCell {
    pub option: usize,
    pub opponent: ResourceKind,
    pub episodes: u64,
    pub episode_length: MeanStd,
    /// Tag actions taken.
    pub tagging_events: MeanStd,
    pub reward: MeanStd,
    /// Total pickups of rock, paper and scissors over the cell.
    pub collected: [u64; 3],
    /// Steps with another player inside the agent's window.
    pub scouting: MeanStd,
}

impl ProbeCell {
    pub fn collected_per_episode(&self) -> [f64; 3] {
        self.collected.map(|c| c as f64 / self.episodes as f64)
    }
}

/// χ² test of two options' pickup distributions (summed over opponents).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickupTest {
    pub option_a: usize,
    pub option_b: usize,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionProbeReport {
    pub agent: String,
    pub num_options: usize,
    pub opponents: Vec<ResourceKind>,
    pub episodes_per_cell: u64,
    pub config_hash: String,
    pub cells: Vec<ProbeCell>,
}

/// Hands control to one option at a time and plays each against every
/// scripted opponent.
#[allow(clippy::too_many_arguments)]
pub fn option_probe(
    grid: &Arc<GridConfig>,
    agent_id: &str,
    net: Arc<AgentNet>,
    params: Arc<ParameterStore<f32>>,
    opponents: &[ResourceKind],
    episodes: u64,
    settings: &EvalSettings,
) -> Result<OptionProbeReport> {
    if !net.variant().has_options() {
        return Err(Error::Usage(format!("option probes need an option-based agent, got {}", net.variant())));
    }
    if episodes == 0 || opponents.is_empty() {
        return Err(Error::Usage("option probes need episodes and opponents".into()));
    }
    let k = net.num_options();
    let n = grid.num_players;
    let mut cells = Vec::with_capacity(k * opponents.len());
    for z in 0..k {
        let policy = ActorPolicy { forced_option: Some(z), ..ActorPolicy::new(net.clone(), params.clone()) };
        let subject = Contestant::Policy { id: format!("{agent_id}/z{z}"), policy };
        for &opp in opponents {
            let cell_settings =
                EvalSettings { seed: rng::derive_seed(settings.seed, &[z as u64, opp.index() as u64]), ..settings.clone() };
            let played = play_episodes(
                grid,
                &[subject.clone(), Contestant::Bot(opp)],
                |r| {
                    let mut seats: Vec<usize> = (0..n).map(|s| usize::from(s > 0)).collect();
                    seats.shuffle(r);
                    seats
                },
                episodes,
                &cell_settings,
            )?;
            let mut len = Vec::new();
            let mut tags = Vec::new();
            let mut reward = Vec::new();
            let mut scouting = Vec::new();
            let mut collected = [0u64; 3];
            for ep in &played {
                let seat = ep.contestants.iter().position(|&c| c == 0).expect("subject seated");
                let s = &ep.record.seats[seat];
                len.push(ep.record.length as f64);
                tags.push(s.tag_actions as f64);
                reward.push(s.env_return);
                scouting.push(s.scouting as f64);
                for (c, p) in collected.iter_mut().zip(s.pickups) {
                    *c += p as u64;
                }
            }
            cells.push(ProbeCell {
                option: z,
                opponent: opp,
                episodes: played.len() as u64,
                episode_length: MeanStd::of(&len),
                tagging_events: MeanStd::of(&tags),
                reward: MeanStd::of(&reward),
                collected,
                scouting: MeanStd::of(&scouting),
            });
        }
    }
    let report = OptionProbeReport {
        agent: agent_id.to_string(),
        num_options: k,
        opponents: opponents.to_vec(),
        episodes_per_cell: episodes,
        config_hash: grid.config_hash(),
        cells,
    };
    report.validate()?;
    Ok(report)
}

impl OptionProbeReport {
    /// Cell count, per-cell episode count and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.num_options * self.opponents.len() {
            return Err(Error::Domain(format!("{} cells for {}x{}", self.cells.len(), self.num_options, self.opponents.len())));
        }
        for c in &self.cells {
            if c.episodes != self.episodes_per_cell {
                return Err(Error::Domain(format!("cell ({}, {}) has {} episodes", c.option, c.opponent.name(), c.episodes)));
            }
            let all = [c.episode_length, c.tagging_events, c.reward, c.scouting];
            if all.iter().any(|m| !m.mean.is_finite() || !m.std.is_finite()) {
                return Err(Error::Numeric(format!("non-finite statistic in cell ({}, {})", c.option, c.opponent.name())));
            }
        }
        Ok(())
    }

    /// Pickup totals of one option summed over opponents.
    pub fn option_pickups(&self, z: usize) -> [u64; 3] {
        let mut t = [0u64; 3];
        for c in self.cells.iter().filter(|c| c.option == z) {
            for (a, b) in t.iter_mut().zip(c.collected) {
                *a += b;
            }
        }
        t
    }

    /// Pairwise χ² homogeneity tests of the options' pickup distributions.
    pub fn pickup_tests(&self) -> Vec<PickupTest> {
        let mut out = Vec::new();
        for a in 0..self.num_options {
            for b in a + 1..self.num_options {
                if let Some(t) = chi_square_2xk(self.option_pickups(a), self.option_pickups(b)) {
                    out.push(PickupTest { option_a: a, option_b: b, ..t });
                }
            }
        }
        out
    }

    /// The pair of options whose pickup distributions differ most.
    pub fn most_distinct_pair(&self) -> Option<PickupTest> {
        self.pickup_tests().into_iter().min_by(|x, y| x.p_value.total_cmp(&y.p_value))
    }

    /// One row per option, opponent and statistic. The collected-resources
    /// row also carries per-kind means.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["option", "opponent", "statistic", "mean", "std", "rock", "paper", "scissors", "episodes", "config_hash"])
            .map_err(err)?;
        for c in &self.cells {
            let per = c.collected_per_episode();
            let total: f64 = per.iter().sum();
            let rows: [(&str, MeanStd, bool); 5] = [
                (PROBE_STATISTICS[0], c.episode_length, false),
                (PROBE_STATISTICS[1], c.tagging_events, false),
                (PROBE_STATISTICS[2], c.reward, false),
                (PROBE_STATISTICS[3], MeanStd { mean: total, std: f64::NAN }, true),
                (PROBE_STATISTICS[4], c.scouting, false),
            ];
            for (name, m, kinds) in rows {
                let k = |i: usize| if kinds { per[i].to_string() } else { String::new() };
                let std = if m.std.is_nan() { String::new() } else { m.std.to_string() };
                w.write_record([
                    c.option.to_string(),
                    c.opponent.name().to_string(),
                    name.to_string(),
                    m.mean.to_string(),
                    std,
                    k(0),
                    k(1),
                    k(2),
                    c.episodes.to_string(),
                    self.config_hash.clone(),
                ])
                .map_err(err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Pearson χ² test of homogeneity on a 2×k table, dropping empty columns.
/// `None` when fewer than two columns or either row is empty.
pub(crate) fn chi_square_2xk(a: [u64; 3], b: [u64; 3]) -> Option<PickupTest> {
    let cols: Vec<(f64, f64)> = a.iter().zip(&b).filter(|(x, y)| **x + **y > 0).map(|(&x, &y)| (x as f64, y as f64)).collect();
    let (ra, rb): (f64, f64) = (cols.iter().map(|c| c.0).sum(), cols.iter().map(|c| c.1).sum());
    if cols.len() < 2 || ra == 0.0 || rb == 0.0 {
        return None;
    }
    let total = ra + rb;
    let mut chi2 = 0.0;
    for &(x, y) in &cols {
        let col = x + y;
        let (ea, eb) = (ra * col / total, rb * col / total);
        chi2 += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = cols.len() - 1;
    let dist = ChiSquared::new(dof as f64).ok()?;
    Some(PickupTest { option_a: 0, option_b: 0, chi2, dof, p_value: dist.sf(chi2) })
}
