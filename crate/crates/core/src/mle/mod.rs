//! Density inference from measured T2* sets against simulated rate
//! distributions.

pub mod benchmark;
pub mod library;
pub mod likelihood;
pub mod pdf;

pub use benchmark::{benchmark_error, power_law_fit, tested_densities, ErrorBenchmark, LINECUT_REFINEMENT};
pub use library::{build_library, CoherenceLibrary, LibraryCell, LibraryProvenance, INTERPOLATION, LIBRARY_SCHEMA};
pub use likelihood::{
    estimate_density, likelihood_surface, likelihood_surface_on, refine_axis, DensityEstimate, LikelihoodSurface,
};
pub use pdf::{build_pdf, histogram_spec, HistogramSpec, RatePdf};
