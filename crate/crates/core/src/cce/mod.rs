//! Coherence of the central spin: cluster correlation expansion, the
//! analytic first-order Ramsey route and an exact reference.

pub mod clusters;
pub mod curve;
pub mod engine;
pub mod exact;
pub mod observable;
pub mod partition;
pub mod propagate;
pub mod sequence;

pub use clusters::{enumerate_clusters, subcluster_table};
pub use curve::{CoherenceCurve, CURVE_SCHEMA};
pub use engine::{cce_coherence, DIVISION_FLOOR};
pub use exact::{exact_coherence, exact_sampled};
pub use observable::{
    config_seed, hahn_curve_adaptive, simulate_observable, HahnSettings, Observable, ObservableSample,
};
pub use partition::{
    a_bath, bath_couplings, cce1_exact_product, partition_couplings, partition_strong_weak, ramsey_cce1_analytic,
    strong_factor, t2_star_from_a_bath, StrongSpin, StrongWeakPartition,
};
pub use propagate::{cluster_contribution, ensemble_contribution, BathState, ClusterState};
pub use sequence::{BathStateMode, BreakdownPolicy, CCEConfig, Propagator, PulseSequence, SequenceKind};
