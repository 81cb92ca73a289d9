//! IO, configuration, and rewrite-backend plumbing for the `capot`
//! binary. The numeric pipeline itself lives in `capot-core`; this
//! crate owns everything that touches files, processes, or the network.

pub mod config;
pub mod error;
pub mod io;
pub mod rewrite;
