//! Stable per-stage seed derivation.
//!
//! A stage seed is the first eight bytes (little endian) of
//! `SHA-256(master_le || stage || 0x00 || id_1 || 0x00 || ...)`, so a
//! stage's stream depends only on its own identifiers.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, stage: &str, ids: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    h.update([0u8]);
    for id in ids {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn episode_seed(base: u64, episode: usize) -> u64 {
    derive_seed(base, "episode", &[&episode.to_string()])
}
