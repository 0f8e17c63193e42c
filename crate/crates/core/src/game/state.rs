use super::observation::{CellCode, Observation, WINDOW};
use super::{compute_payoff, Action, GridConfig, Inventory, Orientation, Pos, ResourceKind};
use crate::rng::{self, Rng};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Resource(ResourceKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerState {
    pub position: Pos,
    pub orientation: Orientation,
    pub inventory: Inventory,
    /// The player ignores its actions while `step < frozen_until`.
    pub frozen_until: Option<u32>,
}

impl PlayerState {
    pub fn is_frozen(&self, step: u32) -> bool {
        self.frozen_until.is_some_and(|u| step < u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// `reward` is the tagger's reward; the tagged player receives its negation.
    Confrontation { tagger: usize, tagged: usize, reward: f64 },
    Pickup { player: usize, kind: ResourceKind, position: Pos },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub observations: Vec<Observation>,
    pub events: Vec<Event>,
    pub terminated: bool,
}

/// Full simulator state. Identical `(config, seed, actions)` streams yield
/// bit-identical states and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    config: Arc<GridConfig>,
    cells: Vec<Cell>,
    players: Vec<PlayerState>,
    step_count: u32,
    terminated: bool,
    rng: Rng,
    /// Steps at which consumed resources re-enter the grid.
    respawn_queue: VecDeque<u32>,
    total_pickups: u64,
}

impl GameState {
    pub fn reset(config: Arc<GridConfig>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::from_seed(seed);
        let mut cells = vec![Cell::Empty; config.rows * config.cols];
        let idx = |p: Pos| p.row as usize * config.cols + p.col as usize;
        for (p, k) in &config.deterministic_resource_cells {
            cells[idx(*p)] = Cell::Resource(*k);
        }
        for p in &config.random_resource_cells {
            cells[idx(*p)] = Cell::Resource(ResourceKind::ALL[rng.random_range(0..3)]);
        }
        let mut free: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Empty).collect();
        free.shuffle(&mut rng);
        let mut free = free.into_iter();
        for _ in 0..config.scattered_resources {
            let i = free.next().expect("validated capacity");
            cells[i] = Cell::Resource(ResourceKind::ALL[rng.random_range(0..3)]);
        }
        let players = (0..config.num_players)
            .map(|_| {
                let i = free.next().expect("validated capacity");
                PlayerState {
                    position: Pos::new((i / config.cols) as i32, (i % config.cols) as i32),
                    orientation: Orientation::ALL[rng.random_range(0..4)],
                    inventory: Inventory::INITIAL,
                    frozen_until: None,
                }
            })
            .collect();
        Ok(GameState {
            config,
            cells,
            players,
            step_count: 0,
            terminated: false,
            rng,
            respawn_queue: VecDeque::new(),
            total_pickups: 0,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn config_arc(&self) -> &Arc<GridConfig> {
        &self.config
    }

    pub fn players(&self) -> &[PlayerState] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &PlayerState {
        &self.players[i]
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn total_pickups(&self) -> u64 {
        self.total_pickups
    }

    pub fn pending_respawns(&self) -> usize {
        self.respawn_queue.len()
    }

    pub fn resources_on_grid(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::Resource(_))).count()
    }

    /// `None` for out-of-bounds positions.
    pub fn cell(&self, p: Pos) -> Option<Cell> {
        self.config.in_bounds(p).then(|| self.cells[self.index(p)])
    }

    pub fn player_at(&self, p: Pos) -> Option<usize> {
        self.players.iter().position(|pl| pl.position == p)
    }

    fn index(&self, p: Pos) -> usize {
        p.row as usize * self.config.cols + p.col as usize
    }

    /// Test and tooling hook: place a player, overriding the reset layout.
    pub fn set_player(&mut self, i: usize, position: Pos, orientation: Orientation) -> Result<()> {
        if !self.config.in_bounds(position) {
            return Err(Error::Usage(format!("{position:?} is outside the grid")));
        }
        if self.players.iter().enumerate().any(|(j, p)| j != i && p.position == position) {
            return Err(Error::Usage(format!("{position:?} is occupied")));
        }
        self.players[i].position = position;
        self.players[i].orientation = orientation;
        Ok(())
    }

    /// Test and tooling hook: overwrite a cell.
    pub fn set_cell(&mut self, p: Pos, cell: Cell) -> Result<()> {
        if !self.config.in_bounds(p) {
            return Err(Error::Usage(format!("{p:?} is outside the grid")));
        }
        let i = self.index(p);
        self.cells[i] = cell;
        Ok(())
    }

    pub fn set_inventory(&mut self, i: usize, inv: Inventory) {
        self.players[i].inventory = inv;
    }

    /// Cells of the 3x3 tag area: one to three cells ahead, one cell to
    /// either side.
    pub fn tag_area(&self, tagger: usize) -> impl Iterator<Item = Pos> + '_ {
        let p = &self.players[tagger];
        (1..=3).flat_map(move |ahead| (-1..=1).map(move |right| p.position.relative(p.orientation, ahead, right)))
    }

    /// Nearest player inside the tagger's tag area (squared Euclidean
    /// distance, ties to the lowest index). Frozen players cannot be tagged.
    pub fn resolve_tag(&self, tagger: usize) -> Option<usize> {
        self.resolve_tag_excluding(tagger, &[])
    }

    fn resolve_tag_excluding(&self, tagger: usize, excluded: &[usize]) -> Option<usize> {
        let me = &self.players[tagger];
        let mut best: Option<(i32, usize)> = None;
        for (j, other) in self.players.iter().enumerate() {
            if j == tagger || excluded.contains(&j) || other.is_frozen(self.step_count) {
                continue;
            }
            if !self.tag_area(tagger).any(|c| c == other.position) {
                continue;
            }
            let d = (other.position.row - me.position.row).pow(2) + (other.position.col - me.position.col).pow(2);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        best.map(|(_, j)| j)
    }

    /// Absolute position shown at window cell `(i, j)` for `player`.
    pub fn window_position(&self, player: usize, i: usize, j: usize) -> Pos {
        let p = &self.players[player];
        p.position
            .relative(p.orientation, Observation::ahead_of_row(i), Observation::right_of_col(j))
    }

    pub fn render_observation(&self, player: usize) -> Observation {
        let mut window = [[CellCode::Empty; WINDOW]; WINDOW];
        for (i, row) in window.iter_mut().enumerate() {
            for (j, code) in row.iter_mut().enumerate() {
                let p = self.window_position(player, i, j);
                *code = match self.cell(p) {
                    None => CellCode::OutOfBounds,
                    Some(_) if self.player_at(p).is_some_and(|k| k != player) => CellCode::OtherPlayer,
                    Some(Cell::Empty) => CellCode::Empty,
                    Some(Cell::Resource(ResourceKind::Rock)) => CellCode::Rock,
                    Some(Cell::Resource(ResourceKind::Paper)) => CellCode::Paper,
                    Some(Cell::Resource(ResourceKind::Scissors)) => CellCode::Scissors,
                };
            }
        }
        let me = &self.players[player];
        Observation { window, own_inventory: me.inventory, own_orientation: me.orientation }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.players.len()).map(|i| self.render_observation(i)).collect()
    }

    /// Current observations of every other player, in player order. Only
    /// learners consume these.
    pub fn concealed_observation(&self, player: usize) -> Vec<Observation> {
        (0..self.players.len())
            .filter(|&j| j != player)
            .map(|j| self.render_observation(j))
            .collect()
    }

    fn random_free_cell(&mut self) -> Option<Pos> {
        let free: Vec<usize> = (0..self.cells.len())
            .filter(|&i| {
                self.cells[i] == Cell::Empty
                    && !self.players.iter().any(|p| self.index(p.position) == i)
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let i = free[self.rng.random_range(0..free.len())];
        Some(Pos::new((i / self.config.cols) as i32, (i % self.config.cols) as i32))
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if self.terminated {
            return Err(Error::Usage("step called on a terminated episode".into()));
        }
        if actions.len() != self.players.len() {
            return Err(Error::Usage(format!(
                "expected {} actions, got {}",
                self.players.len(),
                actions.len()
            )));
        }
        let n = self.players.len();
        let now = self.step_count;
        let mut rewards = vec![0.0; n];
        let mut events = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);

        for &i in &order {
            if self.players[i].is_frozen(now) {
                continue;
            }
            let pl = &self.players[i];
            let target = match actions[i] {
                Action::Forward => Some(pl.position.relative(pl.orientation, 1, 0)),
                Action::Backward => Some(pl.position.relative(pl.orientation, -1, 0)),
                Action::StrafeLeft => Some(pl.position.relative(pl.orientation, 0, -1)),
                Action::StrafeRight => Some(pl.position.relative(pl.orientation, 0, 1)),
                Action::TurnLeft => {
                    self.players[i].orientation = pl.orientation.turn_left();
                    None
                }
                Action::TurnRight => {
                    self.players[i].orientation = pl.orientation.turn_right();
                    None
                }
                Action::Tag | Action::NoOp => None,
            };
            let Some(target) = target else { continue };
            if !self.config.in_bounds(target) || self.player_at(target).is_some() {
                continue;
            }
            self.players[i].position = target;
            let ci = self.index(target);
            if let Cell::Resource(kind) = self.cells[ci] {
                self.cells[ci] = Cell::Empty;
                self.players[i].inventory.add(kind);
                self.total_pickups += 1;
                if let Some(delay) = self.config.respawn_delay {
                    self.respawn_queue.push_back(now + 1 + delay);
                }
                events.push(Event::Pickup { player: i, kind, position: target });
            }
        }

        let mut involved: Vec<usize> = Vec::new();
        for &i in &order {
            if actions[i] != Action::Tag || self.players[i].is_frozen(now) || involved.contains(&i) {
                continue;
            }
            let Some(j) = self.resolve_tag_excluding(i, &involved) else { continue };
            let reward = compute_payoff(&self.players[i].inventory, &self.players[j].inventory)?;
            rewards[i] += reward;
            rewards[j] -= reward;
            events.push(Event::Confrontation { tagger: i, tagged: j, reward });
            involved.push(i);
            involved.push(j);
            if self.config.terminate_on_tag {
                self.terminated = true;
                break;
            }
            if self.config.reset_inventory_on_tag {
                self.players[i].inventory = Inventory::INITIAL;
                self.players[j].inventory = Inventory::INITIAL;
            }
            // Ties count against the tagged player.
            let loser = if reward < 0.0 { i } else { j };
            if let Some(dest) = self.random_free_cell() {
                self.players[loser].position = dest;
            }
            if let Some(d) = self.config.freeze_duration {
                self.players[loser].frozen_until = Some(now + 1 + d);
            }
        }

        self.step_count += 1;
        while self.respawn_queue.front().is_some_and(|&due| due <= self.step_count) {
            match self.random_free_cell() {
                Some(p) => {
                    let kind = ResourceKind::ALL[self.rng.random_range(0..3)];
                    let i = self.index(p);
                    self.cells[i] = Cell::Resource(kind);
                    self.respawn_queue.pop_front();
                }
                None => break,
            }
        }
        if self.step_count >= self.config.episode_limit {
            self.terminated = true;
        }
        Ok(StepOutcome { rewards, observations: self.observations(), events, terminated: self.terminated })
    }

    /// ASCII rendering: players as digits (facing marker after), resources
    /// as R/P/S.
    pub fn render_ascii(&self) -> String {
        let mut out = String::with_capacity((self.config.cols + 1) * self.config.rows);
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                let p = Pos::new(r as i32, c as i32);
                let ch = match self.player_at(p) {
                    Some(i) => std::char::from_digit(i as u32 % 10, 10).unwrap_or('@'),
                    None => match self.cells[self.index(p)] {
                        Cell::Empty => '.',
                        Cell::Resource(k) => k.symbol(),
                    },
                };
                out.push(ch);
            }
            out.push('\n');
        }
        for (i, p) in self.players.iter().enumerate() {
            let facing = match p.orientation {
                Orientation::North => '^',
                Orientation::East => '>',
                Orientation::South => 'v',
                Orientation::West => '<',
            };
            let frozen = if p.is_frozen(self.step_count) { " frozen" } else { "" };
            out.push_str(&format!(
                "player {i} {facing} inv R{} P{} S{}{frozen}\n",
                p.inventory.0[0], p.inventory.0[1], p.inventory.0[2]
            ));
        }
        out
    }
}
