//! Seed plumbing. Every stochastic component owns a `ChaCha8Rng` derived
//! from a root seed and a label, so streams never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed from a parent seed and a path of labels.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    for l in labels {
        hasher.update(l.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive(parent: u64, labels: &[u64]) -> Rng {
    from_seed(derive_seed(parent, labels))
}
