//! Per-replication seeds split off a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Seed for the stream named `label`, independent of every other label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let digest = Sha256::new().chain_update(master.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeedRecord {
    pub cell: String,
    pub replication: u32,
    pub seed: u64,
}
