use super::nash::{effective_diversity, solve_nash, NashReport};
use super::play::{play_episodes, Contestant, EvalSettings};
use crate::game::GridConfig;
use crate::rng;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::Serialize;
use std::sync::Arc;

/// Cross-play payoffs of a set of policies. `payoff[i][j]` is the mean
/// return of `i` against `j`, symmetrised to be exactly antisymmetric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaGame {
    pub policies: Vec<String>,
    pub payoff: Vec<Vec<f64>>,
    /// Before symmetrisation, each cell from its own episodes.
    pub raw: Vec<Vec<f64>>,
    /// Largest `|raw_ij + raw_ji|`, a sampling-noise diagnostic.
    pub raw_asymmetry: f64,
    pub episodes_per_cell: u64,
    pub config_hash: String,
}

/// Plays every ordered pair `(i, j)` for `episodes_per_cell / 2` episodes
/// with `i` in the first seat (`j` fills the remaining seats in a two-player
/// game; larger games split seats evenly and shuffle). Cells are independent
/// and shared out over the configured threads.
pub fn round_robin(
    grid: &Arc<GridConfig>,
    policies: &[Contestant],
    episodes_per_cell: u64,
    settings: &EvalSettings,
) -> Result<MetaGame> {
    let n = policies.len();
    if n == 0 {
        return Err(Error::Usage("a tournament needs at least one policy".into()));
    }
    let half = episodes_per_cell.div_ceil(2);
    if n > 1 && half == 0 {
        return Err(Error::Usage("episodes_per_cell must be positive".into()));
    }
    let players = grid.num_players;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();

    let cell = |&(i, j): &(usize, usize)| -> Result<f64> {
        let pair = [policies[i].clone(), policies[j].clone()];
        let cell_settings = EvalSettings {
            seed: rng::derive_seed(settings.seed, &[i as u64, j as u64]),
            threads: 1,
            ..settings.clone()
        };
        let played = play_episodes(
            grid,
            &pair,
            |r| {
                if players == 2 {
                    return vec![0, 1];
                }
                let mut seats: Vec<usize> = (0..players).map(|s| s % 2).collect();
                seats.shuffle(r);
                seats
            },
            half,
            &cell_settings,
        )?;
        let mut total = 0.0;
        for ep in &played {
            let mine: Vec<f64> = ep
                .contestants
                .iter()
                .zip(&ep.record.seats)
                .filter(|(c, _)| **c == 0)
                .map(|(_, s)| s.env_return)
                .collect();
            total += mine.iter().sum::<f64>() / mine.len() as f64;
        }
        Ok(total / played.len() as f64)
    };

    let threads = settings.threads.clamp(1, pairs.len().max(1));
    let values: Vec<Result<f64>> = if threads == 1 {
        pairs.iter().map(cell).collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<f64>>>> = pairs.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if k >= pairs.len() {
                        break;
                    }
                    *slots[k].lock().expect("slot") = Some(cell(&pairs[k]));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot").expect("every cell ran")).collect()
    };

    let mut raw = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        raw[i][j] = v?;
    }
    let mut payoff = vec![vec![0.0; n]; n];
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                payoff[i][j] = 0.5 * (raw[i][j] - raw[j][i]);
                asym = asym.max((raw[i][j] + raw[j][i]).abs());
            }
        }
    }
    Ok(MetaGame {
        policies: policies.iter().map(Contestant::label).collect(),
        payoff,
        raw,
        raw_asymmetry: asym,
        episodes_per_cell,
        config_hash: grid.config_hash(),
    })
}

impl MetaGame {
    /// Equilibrium and effective diversity of the symmetrised matrix.
    pub fn nash(&self, eps: f64) -> Result<NashReport> {
        let sol = solve_nash(&self.payoff, eps)?;
        Ok(NashReport {
            policies: self.policies.clone(),
            effective_diversity: effective_diversity(&self.payoff, &sol.weights),
            weights: sol.weights,
            exploitability: sol.exploitability,
            iterations: sol.iterations,
        })
    }

    /// Square CSV with policy ids as header row and first column.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        let mut header = vec!["policy".to_string()];
        header.extend(self.policies.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (id, row) in self.policies.iter().zip(&self.payoff) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`MetaGame::write_csv`].
    pub fn read_csv(input: impl std::io::Read) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let mut r = csv::Reader::from_reader(input);
        let err = |e: csv::Error| Error::Format(e.to_string());
        let ids: Vec<String> = r.headers().map_err(err)?.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad payoff {v:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != ids.len() {
                return Err(Error::Format("payoff row width differs from header".into()));
            }
            rows.push(row);
        }
        if rows.len() != ids.len() {
            return Err(Error::Format("payoff matrix is not square".into()));
        }
        Ok((ids, rows))
    }
}
