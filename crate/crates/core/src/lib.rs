//! Coherence of NV centers in P1 electron spin baths: bath generation,
//! cluster correlation expansion, coherence-time statistics, likelihood
//! inversion of measured T2* sets and strong-coupling yield.

pub mod analysis;
pub mod bath;
pub mod cce;
pub mod commands;
pub mod coupling;
pub mod error;
pub mod mle;
pub mod seeds;
pub mod spin_model;
pub mod validation;

pub use error::{Error, Result};

/// Version string embedded in every output artifact.
pub const TOOL_VERSION: &str = concat!("nvbath ", env!("CARGO_PKG_VERSION"));
