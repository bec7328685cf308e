//! Fits of coherence curves and statistics of coherence-time distributions.

pub mod fit;
pub mod stats;
pub mod sweep;

pub use fit::{
    divide_strong, envelope, fit_stretched, fit_stretched_exponential, ramsey_t2star, ramsey_t2star_fit,
    StretchedExpFit,
};
pub use stats::{distribution_stats, median, DistributionStats};
pub use sweep::{run_sweep, SweepCell, SweepGrid, SweepSpec, QUORUM, SWEEP_SCHEMA};
