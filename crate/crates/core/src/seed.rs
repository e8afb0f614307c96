//! Stable seed derivation.
//!
//! Every random stream in a run is keyed by a tuple of labels so that results
//! do not depend on the order in which sessions are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Random generator used throughout the engine.
pub type SimRng = ChaCha8Rng;

/// Hash a base seed together with string labels into a new 64-bit seed.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let out = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&out[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(base: u64, labels: &[&str]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, labels))
}
