//! Seed derivation and the deterministic random stream used everywhere.
//!
//! A single master seed fans out into labeled sub-seeds via FNV-1a over a
//! framed byte layout, so independent pipeline stages (and independent
//! noise records) draw from disjoint, reproducible streams. The layout is
//! part of the on-disk contract: record seeds appear verbatim in noised
//! output files.

use core::hash::Hasher;

use fnv::FnvHasher;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The PRNG used throughout. Stable across platforms and releases.
pub type Stream = ChaCha8Rng;

/// Hashes a master seed plus labeled parts into a 64-bit sub-seed.
///
/// Each part is preceded by a 0xFE frame byte so ("ab","c") and ("a","bc")
/// hash differently.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&master.to_le_bytes());
    for part in parts {
        h.write(&[0xFE]);
        h.write(part.as_bytes());
    }
    h.finish()
}

/// Opens the deterministic stream for a sub-seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Opens the stream for a labeled purpose under a master seed.
pub fn labeled_stream(master: u64, parts: &[&str]) -> Stream {
    stream(derive_seed(master, parts))
}
