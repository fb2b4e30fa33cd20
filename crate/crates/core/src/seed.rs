//! Seed derivation for reproducible, non-aliasing random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `(master, purpose, index)`.
///
/// The triple is hashed with SHA-256 over a length-prefixed encoding, so
/// different purposes or indices never share a stream in practice.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Random stream used everywhere in the crate.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `stream(derive_seed(master, purpose, index))`.
pub fn derived_stream(master: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    stream(derive_seed(master, purpose, index))
}
