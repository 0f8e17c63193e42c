use super::{Inventory, Orientation};
use serde::{Deserialize, Serialize};

/// Window side length.
pub const WINDOW: usize = 4;
/// One-hot channels per window cell.
pub const NUM_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellCode {
    Empty = 0,
    OutOfBounds = 1,
    Rock = 2,
    Paper = 3,
    Scissors = 4,
    OtherPlayer = 5,
}

/// What one player sees: an egocentric 4x4 window rotated so that the
/// facing direction is up, plus its own inventory and orientation.
///
/// `window[i][j]`: row `i = 0` is three cells ahead, row `i = 3` is the
/// player's own row; column `j` is the lateral offset `j - 1` to the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub window: [[CellCode; WINDOW]; WINDOW],
    pub own_inventory: Inventory,
    pub own_orientation: Orientation,
}

impl Observation {
    /// Forward distance of window row `i`.
    pub fn ahead_of_row(i: usize) -> i32 {
        (WINDOW - 1 - i) as i32
    }

    /// Lateral offset (positive is to the right) of window column `j`.
    pub fn right_of_col(j: usize) -> i32 {
        j as i32 - 1
    }

    pub fn sees_other_player(&self) -> bool {
        self.window.iter().flatten().any(|c| *c == CellCode::OtherPlayer)
    }

    /// One-hot window serialized row-major, `NUM_CHANNELS` values per cell.
    pub fn one_hot_window(&self) -> [f32; WINDOW * WINDOW * NUM_CHANNELS] {
        let mut out = [0.0; WINDOW * WINDOW * NUM_CHANNELS];
        for (k, cell) in self.window.iter().flatten().enumerate() {
            out[k * NUM_CHANNELS + *cell as usize] = 1.0;
        }
        out
    }
}
