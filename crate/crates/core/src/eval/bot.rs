use crate::game::{Action, CellCode, GameState, GridConfig, Orientation, Pos, ResourceKind, WINDOW};
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Behaviour settings shared by all scripted bots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotConfig {
    /// Pickups of the bot's kind before it starts hunting.
    pub n_collect: u32,
    /// Fraction of the episode after which the bot hunts regardless.
    pub collect_fraction: f64,
}

impl Default for BotConfig {
    fn default() -> Self {
        BotConfig { n_collect: 5, collect_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Known {
    Unknown,
    Free,
    Resource(ResourceKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BotPhase {
    SeekResource,
    SeekOpponent,
    Tag,
}

/// Pure-strategy opponent: walks to the nearest visible or remembered cell
/// of its own kind, never stepping onto another kind, and once it holds
/// enough it hunts the nearest other player and tags it.
///
/// The bot acts on its own observation window plus a memory of cells it
/// has seen; from the game state it reads only its own pose, inventory and
/// the step counter.
#[derive(Debug, Clone)]
pub struct ScriptedBot {
    kind: ResourceKind,
    cfg: BotConfig,
    memory: Vec<Known>,
    rows: usize,
    cols: usize,
    last_seen: Option<Pos>,
    sweep: Option<Pos>,
    phase: BotPhase,
    rng: Rng,
}

impl ScriptedBot {
    pub fn new(kind: ResourceKind, cfg: BotConfig, grid: &GridConfig, seed: u64) -> Self {
        ScriptedBot {
            kind,
            cfg,
            memory: vec![Known::Unknown; grid.rows * grid.cols],
            rows: grid.rows,
            cols: grid.cols,
            last_seen: None,
            sweep: None,
            phase: BotPhase::SeekResource,
            rng: rng::from_seed(seed),
        }
    }

    pub fn kind(&self) -> ResourceKind {
        self.kind
    }

    pub fn phase(&self) -> BotPhase {
        self.phase
    }

    fn idx(&self, p: Pos) -> Option<usize> {
        (p.row >= 0 && p.col >= 0 && (p.row as usize) < self.rows && (p.col as usize) < self.cols)
            .then(|| p.row as usize * self.cols + p.col as usize)
    }

    /// Safe to enter: inside the grid and not known to hold another kind.
    fn passable(&self, p: Pos) -> bool {
        match self.idx(p).map(|i| self.memory[i]) {
            None => false,
            Some(Known::Resource(k)) => k == self.kind,
            Some(_) => true,
        }
    }

    /// Updates memory from the window and returns visible opponents.
    fn observe(&mut self, state: &GameState, me: usize) -> Vec<Pos> {
        let obs = state.render_observation(me);
        let mut seen = Vec::new();
        for i in 0..WINDOW {
            for j in 0..WINDOW {
                let p = state.window_position(me, i, j);
                let Some(k) = self.idx(p) else { continue };
                self.memory[k] = match obs.window[i][j] {
                    CellCode::Empty => Known::Free,
                    CellCode::Rock => Known::Resource(ResourceKind::Rock),
                    CellCode::Paper => Known::Resource(ResourceKind::Paper),
                    CellCode::Scissors => Known::Resource(ResourceKind::Scissors),
                    CellCode::OtherPlayer => {
                        seen.push(p);
                        self.memory[k]
                    }
                    CellCode::OutOfBounds => continue,
                };
            }
        }
        seen
    }

    /// First step of a shortest passable path to the nearest goal cell.
    fn first_step(&self, from: Pos, goal: impl Fn(Pos) -> bool) -> Option<Pos> {
        let start = self.idx(from)?;
        let mut prev = vec![usize::MAX; self.memory.len()];
        prev[start] = start;
        let mut queue = VecDeque::from([from]);
        while let Some(p) = queue.pop_front() {
            if p != from && goal(p) {
                let mut cur = self.idx(p)?;
                while prev[cur] != start {
                    cur = prev[cur];
                }
                return Some(Pos::new((cur / self.cols) as i32, (cur % self.cols) as i32));
            }
            for (dr, dc) in [(-1, 0), (0, 1), (1, 0), (0, -1)] {
                let n = p.offset(dr, dc);
                if !self.passable(n) {
                    continue;
                }
                let ni = self.idx(n)?;
                if prev[ni] == usize::MAX {
                    prev[ni] = self.idx(p)?;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Action that moves one cell towards the adjacent `next`.
    fn move_to(&self, pos: Pos, facing: Orientation, next: Pos) -> Action {
        let (dr, dc) = (next.row - pos.row, next.col - pos.col);
        let (fr, fc) = facing.forward();
        let (rr, rc) = facing.right();
        if (dr, dc) == (fr, fc) {
            Action::Forward
        } else if (dr, dc) == (rr, rc) {
            Action::StrafeRight
        } else if (dr, dc) == (-rr, -rc) {
            Action::StrafeLeft
        } else {
            Action::TurnRight
        }
    }

    fn random_target(&mut self) -> Pos {
        let unknown: Vec<usize> = (0..self.memory.len()).filter(|&i| self.memory[i] == Known::Unknown).collect();
        let i = if unknown.is_empty() || self.phase != BotPhase::SeekResource {
            self.rng.random_range(0..self.memory.len())
        } else {
            unknown[self.rng.random_range(0..unknown.len())]
        };
        Pos::new((i / self.cols) as i32, (i % self.cols) as i32)
    }

    fn sweep_step(&mut self, pos: Pos, facing: Orientation) -> Action {
        for _ in 0..4 {
            let target = match self.sweep {
                Some(t) if t != pos => t,
                _ => {
                    let t = self.random_target();
                    self.sweep = Some(t);
                    t
                }
            };
            if let Some(next) = self.first_step(pos, |p| p == target) {
                return self.move_to(pos, facing, next);
            }
            self.sweep = None;
        }
        Action::TurnRight
    }

    pub fn act(&mut self, state: &GameState, me: usize) -> Action {
        let seen = self.observe(state, me);
        let player = state.player(me);
        if player.is_frozen(state.step_count()) {
            return Action::NoOp;
        }
        let (pos, facing) = (player.position, player.orientation);
        let collected = player.inventory.get(self.kind).saturating_sub(1);
        let cap = (state.config().episode_limit as f64 * self.cfg.collect_fraction) as u32;
        let hunting = collected >= self.cfg.n_collect || state.step_count() >= cap;
        if !hunting {
            self.phase = BotPhase::SeekResource;
            let kind = self.kind;
            let memory = &self.memory;
            let cols = self.cols;
            let goal = |p: Pos| memory[p.row as usize * cols + p.col as usize] == Known::Resource(kind);
            return match self.first_step(pos, goal) {
                Some(next) if state.player_at(next).is_none() => self.move_to(pos, facing, next),
                Some(_) => Action::TurnLeft,
                None => self.sweep_step(pos, facing),
            };
        }

        if state.resolve_tag(me).is_some() {
            self.phase = BotPhase::Tag;
            return Action::Tag;
        }
        self.phase = BotPhase::SeekOpponent;
        if let Some(&target) = seen.iter().min_by_key(|p| (p.row - pos.row).abs() + (p.col - pos.col).abs()) {
            self.last_seen = Some(target);
            let (fr, fc) = facing.forward();
            let (rr, rc) = facing.right();
            let (dr, dc) = (target.row - pos.row, target.col - pos.col);
            let ahead = dr * fr + dc * fc;
            let right = dr * rr + dc * rc;
            if ahead <= 0 {
                return if right < 0 { Action::TurnLeft } else { Action::TurnRight };
            }
            let step = if right.abs() > 1 {
                pos.relative(facing, 0, right.signum())
            } else {
                pos.relative(facing, 1, 0)
            };
            if self.passable(step) && state.player_at(step).is_none() {
                return self.move_to(pos, facing, step);
            }
        }
        if let Some(target) = self.last_seen {
            if target == pos {
                self.last_seen = None;
            } else if let Some(next) = self.first_step(pos, |p| p == target) {
                if state.player_at(next).is_none() {
                    return self.move_to(pos, facing, next);
                }
                self.last_seen = None;
            } else {
                self.last_seen = None;
            }
        }
        self.sweep_step(pos, facing)
    }
}
