//! Spin species, constants, dipolar couplings and cluster Hamiltonians.

pub mod dipolar;
pub mod hamiltonian;
pub mod ops;
pub mod params;
pub mod spectroscopy;

pub use dipolar::{dipolar_tensor, electron_zz, nv_frame, secular_azz};
pub use hamiltonian::{ClusterCouplings, ClusterHamiltonian, CouplingModel, ModelParams, NuclearState, SpinSystem};
pub use params::{
    jt_axes, mhz_to_rad_per_ms, rad_per_ms_to_mhz, CentralSpinParams, FieldConfig, HyperfineModel, HyperfineTable,
    Isotope, P1Params, ParameterSet, PhysicalConstants,
};
pub use spectroscopy::{distinct_lines, hyperfine_table, p1_transition_frequencies, P1Line};
