//! Nearest-neighbour statistics, visibility of the closest bath spin and the
//! yield of strongly coupled spins versus bath dimensionality.

pub mod nn;
pub mod visibility;
pub mod yields;

pub use nn::{gamma_2d, gamma_3d, gamma_slab, nn_pdf, Dimensionality, NNDistribution};
pub use visibility::{lateral_radius_for, visibility, visibility_from, visibility_ratio_2d3d, VisibilityRatio, VisibilitySample};
pub use yields::{logistic_knee, yield_sweep, yield_sweep_with, YieldCell, YieldCrossover, YieldReport, MASTER_THICKNESS, YIELD_SCHEMA};
