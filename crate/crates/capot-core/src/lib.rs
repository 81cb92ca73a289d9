//! Core primitives for studying dense-retrieval robustness to query noise.
//!
//! The crate covers the full loop at desk scale: deterministic query
//! noising, a hashed character n-gram dual encoder, contrastive alignment
//! of a query encoder against a frozen document index, exact and IVF
//! inner-product search, and degradation reporting.
//!
//! Everything here is `no_std` + `alloc`. File IO, the CLI, and the HTTP
//! rewrite backend live in the companion `capot-cli` crate.
//!
//! All randomness flows from a caller-supplied master seed through labeled
//! sub-streams (see [`rng`]), so every pipeline stage is reproducible
//! byte-for-byte from its config.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod index;
pub mod loss;
pub mod metrics;
pub mod noise;
pub mod resources;
pub mod rewrite;
pub mod rng;
pub mod train;

pub use error::CoreError;
