//! Physical constants, spin species and the parameter file.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const PARAMS_SCHEMA: &str = "nvbath.params/1";

const DEFAULT_PARAMS: &str = include_str!("../../data/default_params.toml");

/// MHz to angular frequency in rad/ms.
#[inline]
pub fn mhz_to_rad_per_ms(f: f64) -> f64 {
    2.0 * PI * f * 1e3
}

/// Angular frequency in rad/ms to MHz.
#[inline]
pub fn rad_per_ms_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e3)
}

/// Fundamental constants in internal units (nm, ms, rad/ms, Gauss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio, rad/ms/G. Negative: `-gamma_e * B * Sz` puts
    /// m_s = +1 above m_s = -1.
    pub gamma_e: f64,
    /// hbar * mu0 / 4pi in rad/ms nm^3 per (rad/ms/G)^2.
    pub hbar_mu0_over_4pi: f64,
    /// `hbar_mu0_over_4pi * gamma_e^2`: electron-electron dipolar scale in rad/ms nm^3.
    pub dipolar_prefactor: f64,
    /// Conventional cubic cell edge, nm.
    pub diamond_lattice_constant: f64,
    /// Carbon sites per nm^3.
    pub diamond_atomic_density: f64,
}

impl PhysicalConstants {
    pub fn new(gamma_e: f64, hbar_mu0_over_4pi: f64, diamond_lattice_constant: f64) -> Self {
        PhysicalConstants {
            gamma_e,
            hbar_mu0_over_4pi,
            dipolar_prefactor: hbar_mu0_over_4pi * gamma_e * gamma_e,
            diamond_lattice_constant,
            diamond_atomic_density: 8.0 / diamond_lattice_constant.powi(3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = 8.0 / self.diamond_lattice_constant.powi(3);
        if ((self.diamond_atomic_density - expected) / expected).abs() > 1e-3 {
            return Err(invalid("diamond_atomic_density must equal 8/a^3 within 0.1%"));
        }
        if !(self.gamma_e.is_finite() && self.gamma_e != 0.0) {
            return Err(invalid("gamma_e must be finite and nonzero"));
        }
        Ok(())
    }

    /// Nearest-neighbour C-C distance.
    pub fn bond_length(&self) -> f64 {
        self.diamond_lattice_constant * 3f64.sqrt() / 4.0
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        ParameterSet::default().constants()
    }
}

/// The NV center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralSpinParams {
    pub spin: f64,
    /// rad/ms
    pub zero_field_splitting: f64,
    /// Unit vector in the crystal frame.
    pub quantization_axis: Vector3<f64>,
    /// m_s values of |0> and |1>.
    pub qubit_levels: (i8, i8),
}

impl CentralSpinParams {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.qubit_levels;
        if a == b {
            return Err(invalid("qubit levels must be distinct"));
        }
        if ![a, b].iter().all(|m| (-1..=1).contains(m)) {
            return Err(invalid("qubit levels must be m_s values in {-1, 0, +1}"));
        }
        if (self.quantization_axis.norm() - 1.0).abs() > 1e-12 {
            return Err(invalid("quantization axis must have unit norm"));
        }
        if self.spin != 1.0 {
            return Err(invalid("only spin-1 central spins are supported"));
        }
        Ok(())
    }

    /// Free energy of level `m` (rad/ms) in a field `b_z` along the axis.
    pub fn level_energy(&self, constants: &PhysicalConstants, b_z: f64, m: f64) -> f64 {
        self.zero_field_splitting * m * m - constants.gamma_e * b_z * m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Isotope {
    N14,
    N15,
}

impl Isotope {
    pub fn nuclear_spin(self) -> f64 {
        match self {
            Isotope::N14 => 1.0,
            Isotope::N15 => 0.5,
        }
    }

    /// Allowed nuclear projections, ascending.
    pub fn projections(self) -> Vec<f64> {
        projections(self.nuclear_spin())
    }
}

impl std::str::FromStr for Isotope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n14" | "14n" => Ok(Isotope::N14),
            "n15" | "15n" => Ok(Isotope::N15),
            other => Err(invalid(format!("unknown isotope '{other}' (expected n14 or n15)"))),
        }
    }
}

impl std::fmt::Display for Isotope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Isotope::N14 => "n14",
            Isotope::N15 => "n15",
        })
    }
}

pub(crate) fn projections(spin: f64) -> Vec<f64> {
    let n = (2.0 * spin).round() as i32;
    (0..=n).map(|k| -spin + k as f64).collect()
}

/// The four <111> Jahn-Teller directions in the crystal frame. Axis 0 is
/// [111], which is also the default NV axis.
pub fn jt_axes() -> [Vector3<f64>; 4] {
    let s = 1.0 / 3f64.sqrt();
    [
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ]
}

/// Effective first-order-plus-mixing shift of the P1 electron frequency for
/// each (nuclear projection, Jahn-Teller axis), rad/ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineTable {
    /// Ascending nuclear projections.
    pub projections: Vec<f64>,
    /// `shifts[k][axis]` for `projections[k]`.
    pub shifts: Vec<[f64; 4]>,
}

impl HyperfineTable {
    pub fn zeros(nuclear_spin: f64) -> Self {
        let projections = projections(nuclear_spin);
        let shifts = vec![[0.0; 4]; projections.len()];
        HyperfineTable { projections, shifts }
    }

    pub fn shift(&self, m: f64, axis: usize) -> Result<f64> {
        let k = self
            .projections
            .iter()
            .position(|&p| (p - m).abs() < 1e-9)
            .ok_or(Error::MissingHyperfine { m, axis })?;
        self.shifts
            .get(k)
            .and_then(|row| row.get(axis))
            .copied()
            .ok_or(Error::MissingHyperfine { m, axis })
    }
}

/// How the hyperfine shifts are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperfineModel {
    /// Axial tensor (rad/ms); the shift table is derived per field.
    Tensor { parallel: f64, perpendicular: f64 },
    /// Fixed table used at every field.
    Table(HyperfineTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Params {
    pub isotope: Isotope,
    pub spin: f64,
    pub nuclear_spin: f64,
    pub hyperfine: HyperfineModel,
    pub jt_axes: [Vector3<f64>; 4],
}

impl P1Params {
    pub fn with_table(isotope: Isotope, table: HyperfineTable) -> Self {
        P1Params {
            isotope,
            spin: 0.5,
            nuclear_spin: isotope.nuclear_spin(),
            hyperfine: HyperfineModel::Table(table),
            jt_axes: jt_axes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let HyperfineModel::Table(t) = &self.hyperfine {
            let expected = projections(self.nuclear_spin);
            if t.projections.len() != expected.len() || t.shifts.len() != expected.len() {
                return Err(invalid("hyperfine table must cover every nuclear projection"));
            }
        }
        for a in &self.jt_axes {
            let ok = (a.norm() - 1.0).abs() < 1e-12
                && a.iter().all(|c| (c.abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
            if !ok {
                return Err(invalid("Jahn-Teller axes must be the four <111> unit vectors"));
            }
        }
        Ok(())
    }
}

/// Static field along the central-spin quantization axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Gauss
    pub b_z: f64,
}

impl FieldConfig {
    pub fn new(b_z: f64) -> Result<Self> {
        if !(b_z.is_finite() && b_z >= 0.0) {
            return Err(invalid("field must be finite and non-negative"));
        }
        Ok(FieldConfig { b_z })
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { b_z: 50.0 }
    }
}

// --- parameter file -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEntry {
    pub gamma_e: f64,
    pub hbar_mu0_over_4pi: f64,
    pub diamond_lattice_constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diamond_atomic_density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralEntry {
    pub spin: f64,
    pub zero_field_splitting_mhz: f64,
    pub quantization_axis: [f64; 3],
    pub qubit_levels: [i8; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotopeEntry {
    pub nuclear_spin: f64,
    pub a_parallel_mhz: f64,
    pub a_perpendicular_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Entries {
    pub n14: IsotopeEntry,
    pub n15: IsotopeEntry,
}

/// Contents of a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub schema: String,
    pub constants: ConstantsEntry,
    pub central: CentralEntry,
    pub p1: P1Entries,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet::parse(DEFAULT_PARAMS).expect("bundled parameter file is valid")
    }
}

impl ParameterSet {
    pub fn parse(text: &str) -> Result<Self> {
        let set: ParameterSet = toml::from_str(text)?;
        if set.schema != PARAMS_SCHEMA {
            return Err(Error::Schema { expected: PARAMS_SCHEMA.into(), found: set.schema });
        }
        set.constants().validate()?;
        set.central()?.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameter set serializes")
    }

    pub fn constants(&self) -> PhysicalConstants {
        let c = &self.constants;
        let mut out = PhysicalConstants::new(c.gamma_e, c.hbar_mu0_over_4pi, c.diamond_lattice_constant);
        if let Some(d) = c.diamond_atomic_density {
            out.diamond_atomic_density = d;
        }
        out
    }

    pub fn central(&self) -> Result<CentralSpinParams> {
        let c = &self.central;
        let axis = Vector3::from(c.quantization_axis);
        let norm = axis.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("quantization axis must be nonzero"));
        }
        Ok(CentralSpinParams {
            spin: c.spin,
            zero_field_splitting: mhz_to_rad_per_ms(c.zero_field_splitting_mhz),
            quantization_axis: axis / norm,
            qubit_levels: (c.qubit_levels[0], c.qubit_levels[1]),
        })
    }

    pub fn p1(&self, isotope: Isotope) -> P1Params {
        let e = match isotope {
            Isotope::N14 => &self.p1.n14,
            Isotope::N15 => &self.p1.n15,
        };
        P1Params {
            isotope,
            spin: 0.5,
            nuclear_spin: e.nuclear_spin,
            hyperfine: HyperfineModel::Tensor {
                parallel: mhz_to_rad_per_ms(e.a_parallel_mhz),
                perpendicular: mhz_to_rad_per_ms(e.a_perpendicular_mhz),
            },
            jt_axes: jt_axes(),
        }
    }
}
