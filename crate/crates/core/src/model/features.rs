use crate::game::{Observation, NUM_CHANNELS, WINDOW};

pub const WINDOW_FEATURES: usize = WINDOW * WINDOW * NUM_CHANNELS;
/// Inventory (3) and orientation one-hot (4).
pub const EXTRA_FEATURES: usize = 7;
pub const OBS_FEATURES: usize = WINDOW_FEATURES + EXTRA_FEATURES;

const INVENTORY_SCALE: f32 = 0.1;

/// Network input for one observation: the one-hot window serialized
/// row-major (a length-16 sequence with 6 channels) followed by the scaled
/// inventory and the orientation one-hot.
pub fn obs_features(obs: &Observation) -> [f32; OBS_FEATURES] {
    let mut out = [0.0; OBS_FEATURES];
    out[..WINDOW_FEATURES].copy_from_slice(&obs.one_hot_window());
    for (i, c) in obs.own_inventory.0.iter().enumerate() {
        out[WINDOW_FEATURES + i] = *c as f32 * INVENTORY_SCALE;
    }
    out[WINDOW_FEATURES + 3 + obs.own_orientation.index()] = 1.0;
    out
}
