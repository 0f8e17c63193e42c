use super::runner::{MatchSource, SeatSpec};
use crate::game::ResourceKind;
use crate::rng::Rng;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Every seat is drawn uniformly from the population (repeats allowed).
    SelfPlayPool,
    /// One population member against uniformly drawn scripted opponents.
    FixedOpponents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matchmaker {
    pub mode: MatchMode,
    /// Agent indices eligible for seats.
    pub population: Vec<usize>,
    pub opponents: Vec<ResourceKind>,
}

impl Matchmaker {
    pub fn self_play(population: Vec<usize>) -> Self {
        Matchmaker { mode: MatchMode::SelfPlayPool, population, opponents: Vec::new() }
    }

    pub fn fixed(population: Vec<usize>, opponents: Vec<ResourceKind>) -> Self {
        Matchmaker { mode: MatchMode::FixedOpponents, population, opponents }
    }
}

impl MatchSource for Matchmaker {
    fn sample(&mut self, rng: &mut Rng, num_players: usize) -> Vec<SeatSpec> {
        let pick = |rng: &mut Rng, from: &[usize]| SeatSpec::Agent(from[rng.random_range(0..from.len())]);
        match self.mode {
            MatchMode::SelfPlayPool => (0..num_players).map(|_| pick(rng, &self.population)).collect(),
            MatchMode::FixedOpponents => {
                let mut seats = vec![pick(rng, &self.population)];
                for _ in 1..num_players {
                    seats.push(match self.opponents.as_slice() {
                        [] => SeatSpec::Random,
                        o => SeatSpec::Bot(o[rng.random_range(0..o.len())]),
                    });
                }
                seats.shuffle(rng);
                seats
            }
        }
    }
}
