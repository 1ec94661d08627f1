//! Per-item RNG derivation.
//!
//! Each document or sequence gets its own stream seeded from
//! `sha256(global_seed || item_id)`, so results do not depend on the order
//! or the thread in which items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type ItemRng = ChaCha8Rng;

pub fn derive_seed(global_seed: u64, item_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(item_id.as_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn item_rng(global_seed: u64, item_id: &str) -> ItemRng {
    ChaCha8Rng::from_seed(derive_seed(global_seed, item_id))
}

pub fn seeded_rng(seed: u64) -> ItemRng {
    ChaCha8Rng::seed_from_u64(seed)
}
