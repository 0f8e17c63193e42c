//! Spatialised rock-paper-scissors Markov games.
//!
//! Two presets are shipped: Running With Scissors (two players, one
//! confrontation ends the episode) and RPS Arena (five players, respawning
//! resources, confrontations reset inventories and freeze the loser).

mod config;
mod observation;
mod payoff;
pub mod replay;
mod state;

pub use config::{GridConfig, Preset};
pub use observation::{CellCode, Observation, NUM_CHANNELS, WINDOW};
pub use payoff::{compute_payoff, payoff_matrix, PAYOFF_SCALE};
pub use state::{Cell, Event, GameState, PlayerState, StepOutcome};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Rock,
    Paper,
    Scissors,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [ResourceKind::Rock, ResourceKind::Paper, ResourceKind::Scissors];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The kind that beats `self`.
    pub fn counter(self) -> Self {
        match self {
            ResourceKind::Rock => ResourceKind::Paper,
            ResourceKind::Paper => ResourceKind::Scissors,
            ResourceKind::Scissors => ResourceKind::Rock,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Rock => "rock",
            ResourceKind::Paper => "paper",
            ResourceKind::Scissors => "scissors",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            ResourceKind::Rock => 'R',
            ResourceKind::Paper => 'P',
            ResourceKind::Scissors => 'S',
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rock" | "r" => Some(ResourceKind::Rock),
            "paper" | "p" => Some(ResourceKind::Paper),
            "scissors" | "s" => Some(ResourceKind::Scissors),
            _ => None,
        }
    }
}

/// Resource counts indexed by [`ResourceKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Inventory(pub [u32; 3]);

impl Inventory {
    /// Every player starts with one of each resource.
    pub const INITIAL: Inventory = Inventory([1, 1, 1]);

    pub fn new(rock: u32, paper: u32, scissors: u32) -> Self {
        Inventory([rock, paper, scissors])
    }

    pub fn get(&self, kind: ResourceKind) -> u32 {
        self.0[kind.index()]
    }

    pub fn add(&mut self, kind: ResourceKind) {
        self.0[kind.index()] += 1;
    }

    pub fn l1(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Counts as a distribution over kinds.
    pub fn normalized(&self) -> [f64; 3] {
        let n = self.l1().max(1) as f64;
        [self.0[0] as f64 / n, self.0[1] as f64 / n, self.0[2] as f64 / n]
    }
}

impl Default for Inventory {
    fn default() -> Self {
        Self::INITIAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::North, Orientation::East, Orientation::South, Orientation::West];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit step (row, col) in the facing direction.
    pub fn forward(self) -> (i32, i32) {
        match self {
            Orientation::North => (-1, 0),
            Orientation::East => (0, 1),
            Orientation::South => (1, 0),
            Orientation::West => (0, -1),
        }
    }

    /// Unit step to the right of the facing direction.
    pub fn right(self) -> (i32, i32) {
        self.turn_right().forward()
    }

    pub fn turn_right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    pub fn turn_left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward = 0,
    Backward = 1,
    StrafeLeft = 2,
    StrafeRight = 3,
    TurnLeft = 4,
    TurnRight = 5,
    Tag = 6,
    NoOp = 7,
}

impl Action {
    pub const COUNT: usize = 8;
    pub const ALL: [Action; 8] = [
        Action::Forward,
        Action::Backward,
        Action::StrafeLeft,
        Action::StrafeRight,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Tag,
        Action::NoOp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Grid coordinate; signed so that out-of-bounds neighbours are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub fn new(row: i32, col: i32) -> Self {
        Pos { row, col }
    }

    pub fn offset(self, dr: i32, dc: i32) -> Self {
        Pos::new(self.row + dr, self.col + dc)
    }

    /// Cell reached by moving `ahead` steps forward and `right` steps to the
    /// right when facing `o`.
    pub fn relative(self, o: Orientation, ahead: i32, right: i32) -> Self {
        let (fr, fc) = o.forward();
        let (rr, rc) = o.right();
        Pos::new(self.row + ahead * fr + right * rr, self.col + ahead * fc + right * rc)
    }
}
