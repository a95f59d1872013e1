//! Labeled seed streams.
//!
//! Every stochastic step draws from a stream derived from the study's base
//! seed plus a stage label and integer coordinates (level index, repeat index,
//! point index, ...). Streams are independent of execution order, so parallel
//! evaluation cannot perturb results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 256-bit seed from `(base, label, parts)`.
pub fn derive_seed(base: u64, label: &str, parts: &[u64]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([label.len() as u8]);
    hasher.update(label.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    hasher.finalize().into()
}

/// A fresh deterministic generator for the given stream coordinates.
pub fn stream(base: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(base, label, parts))
}

/// Folds a derived seed back into a `u64`, for stages that re-derive
/// sub-streams from their own base.
pub fn derive_u64(base: u64, label: &str, parts: &[u64]) -> u64 {
    let bytes = derive_seed(base, label, parts);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}
