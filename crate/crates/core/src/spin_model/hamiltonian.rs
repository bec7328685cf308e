//! Central spin plus P1 cluster Hamiltonians.
//!
//! Full-space basis: central level index c (m = +1, 0, -1) times bath bit
//! patterns, index `c * 2^n + bits`. Bit k set means bath spin k is down.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dipolar::{dipolar_tensor, nv_frame};
use super::ops::hermiticity_error;
use super::params::{CentralSpinParams, FieldConfig, HyperfineTable, P1Params, PhysicalConstants};
use super::spectroscopy::hyperfine_table;
use crate::error::{invalid, Error, Result};

/// Which parts of the dipolar tensors enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingModel {
    /// Every tensor component, including terms that flip the central spin.
    Full,
    /// Central-bath S_z A_zz P_z only; bath-bath zz plus flip-flop.
    #[default]
    Secular,
}

impl CouplingModel {
    /// Whether bath magnetization is conserved by the conditional Hamiltonians.
    pub fn conserves_magnetization(self) -> bool {
        matches!(self, CouplingModel::Secular)
    }

    /// Whether the central S_z commutes with the full Hamiltonian.
    pub fn conserves_central_sz(self) -> bool {
        matches!(self, CouplingModel::Secular)
    }

    fn keeps_central(self, mu: usize, nu: usize) -> bool {
        match self {
            CouplingModel::Full => true,
            CouplingModel::Secular => mu == Z && nu == Z,
        }
    }

    fn keeps_pair(self, mu: usize, nu: usize) -> bool {
        match self {
            CouplingModel::Full => true,
            CouplingModel::Secular => (mu == Z && nu == Z) || (mu == PLUS && nu == MINUS) || (mu == MINUS && nu == PLUS),
        }
    }
}

impl std::str::FromStr for CouplingModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CouplingModel::Full),
            "secular" => Ok(CouplingModel::Secular),
            other => Err(invalid(format!("unknown coupling model '{other}'"))),
        }
    }
}

pub(crate) const PLUS: usize = 0;
pub(crate) const MINUS: usize = 1;
pub(crate) const Z: usize = 2;

/// Physical parameters needed to build Hamiltonians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub constants: PhysicalConstants,
    pub central: CentralSpinParams,
    pub p1: P1Params,
}

impl ModelParams {
    pub fn from_set(set: &super::params::ParameterSet, isotope: super::params::Isotope) -> Result<Self> {
        let p = ModelParams { constants: set.constants(), central: set.central()?, p1: set.p1(isotope) };
        p.validate()?;
        Ok(p)
    }

    pub fn default_for(isotope: super::params::Isotope) -> Self {
        Self::from_set(&super::params::ParameterSet::default(), isotope).expect("bundled parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.central.validate()?;
        self.p1.validate()
    }
}

/// Static nuclear state of one P1: projection and Jahn-Teller axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearState {
    pub m: f64,
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHamiltonian {
    pub dimension: usize,
    pub matrix: DMatrix<Complex64>,
    /// Bath index of each bit position, in bit order.
    pub spin_index_map: Vec<usize>,
}

/// Spherical coefficients `C = M^T T M` so that `S.T.P = sum C[mu][nu] O_mu O_nu`
/// with O in (S+, S-, Sz).
pub fn spherical(t: &Matrix3<f64>) -> Matrix3<Complex64> {
    let h = Complex64::new(0.5, 0.0);
    let i = Complex64::new(0.0, 0.5);
    let o = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let m = Matrix3::new(h, h, o, -i, i, o, o, o, one);
    m.transpose() * t.map(|x| Complex64::new(x, 0.0)) * m
}

/// A central spin and a fixed set of bath positions, with the single-spin
/// data precomputed.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub constants: PhysicalConstants,
    pub central: CentralSpinParams,
    pub field: FieldConfig,
    pub model: CouplingModel,
    pub table: HyperfineTable,
    /// NV-frame positions relative to the central spin, nm.
    positions: Vec<Vector3<f64>>,
    nv_coupling: Vec<Matrix3<Complex64>>,
    coupling_scale: f64,
}

impl SpinSystem {
    pub fn new(
        params: &ModelParams,
        field: FieldConfig,
        model: CouplingModel,
        central_position: &Vector3<f64>,
        bath_positions: &[Vector3<f64>],
    ) -> Result<Self> {
        let table = hyperfine_table(&params.p1, &field, &params.central.quantization_axis, &params.constants)?;
        Self::with_table(params, field, model, table, central_position, bath_positions)
    }

    pub fn with_table(
        params: &ModelParams,
        field: FieldConfig,
        model: CouplingModel,
        table: HyperfineTable,
        central_position: &Vector3<f64>,
        bath_positions: &[Vector3<f64>],
    ) -> Result<Self> {
        let frame = nv_frame(&params.central.quantization_axis);
        let positions: Vec<Vector3<f64>> = bath_positions.iter().map(|p| frame * (p - central_position)).collect();
        let g = params.constants.gamma_e;
        let nv_coupling = positions
            .iter()
            .map(|r| dipolar_tensor(r, g, g, &params.constants).map(|t| spherical(&t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpinSystem {
            constants: params.constants,
            central: params.central.clone(),
            field,
            model,
            table,
            positions,
            nv_coupling,
            coupling_scale: 1.0,
        })
    }

    /// Multiply every dipolar coupling by `scale` (0 gives the free system).
    pub fn with_coupling_scale(mut self, scale: f64) -> Self {
        self.coupling_scale = scale;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn qubit_levels(&self) -> (f64, f64) {
        let (a, b) = self.central.qubit_levels;
        (f64::from(a), f64::from(b))
    }

    /// Central-bath zz coupling of spin i, rad/ms.
    pub fn nv_zz(&self, i: usize) -> f64 {
        self.nv_coupling[i][(Z, Z)].re * self.coupling_scale
    }

    /// Secular dephasing coupling A_z of spin i: (m1 - m0) * zz.
    pub fn azz(&self, i: usize) -> f64 {
        let (m0, m1) = self.qubit_levels();
        (m1 - m0) * self.nv_zz(i)
    }

    pub fn all_azz(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.azz(i)).collect()
    }

    /// Spherical bath-bath coefficients for the pair (i, j).
    pub fn pair(&self, i: usize, j: usize) -> Result<Matrix3<Complex64>> {
        let g = self.constants.gamma_e;
        let t = dipolar_tensor(&(self.positions[j] - self.positions[i]), g, g, &self.constants)?;
        Ok(spherical(&t) * Complex64::new(self.coupling_scale, 0.0))
    }

    /// Bath-bath zz coupling.
    pub fn pair_zz(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.pair(i, j)?[(Z, Z)].re)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.positions[i] - self.positions[j]).norm()
    }

    /// P1 electron frequency (Zeeman plus hyperfine shift), rad/ms.
    pub fn bath_frequency(&self, nuclear: NuclearState) -> Result<f64> {
        Ok(-self.constants.gamma_e * self.field.b_z + self.table.shift(nuclear.m, nuclear.axis)?)
    }

    /// Free central-spin energy of level m.
    pub fn central_energy(&self, m: f64) -> f64 {
        self.central.level_energy(&self.constants, self.field.b_z, m)
    }

    fn check_cluster(&self, cluster: &[usize], nuclear: &[NuclearState], mean_field: Option<&[f64]>) -> Result<()> {
        if nuclear.len() != cluster.len() {
            return Err(invalid("nuclear assignment must cover every cluster member"));
        }
        if mean_field.is_some_and(|h| h.len() != cluster.len()) {
            return Err(invalid("mean field must cover every cluster member"));
        }
        if cluster.len() > 24 {
            return Err(invalid("cluster too large for dense propagation"));
        }
        Ok(())
    }

    /// State-independent couplings of `cluster`; reusable across bath states.
    pub fn cluster_couplings(&self, cluster: &[usize]) -> Result<ClusterCouplings> {
        let mut central = Vec::new();
        for (k, &i) in cluster.iter().enumerate() {
            let c = &self.nv_coupling[i];
            for mu in 0..3 {
                for nu in 0..3 {
                    let v = c[(mu, nu)] * self.coupling_scale;
                    if self.model.keeps_central(mu, nu) && v.norm() != 0.0 {
                        central.push((k, mu, nu, v));
                    }
                }
            }
        }
        let mut pairs = Vec::new();
        for a in 0..cluster.len() {
            for b in a + 1..cluster.len() {
                let c = self.pair(cluster[a], cluster[b])?;
                for mu in 0..3 {
                    for nu in 0..3 {
                        if self.model.keeps_pair(mu, nu) && c[(mu, nu)].norm() != 0.0 {
                            pairs.push((a, b, mu, nu, c[(mu, nu)]));
                        }
                    }
                }
            }
        }
        Ok(ClusterCouplings { n: cluster.len(), central, pairs })
    }

    fn single_terms(&self, nuclear: &[NuclearState], mean_field: Option<&[f64]>) -> Result<Vec<f64>> {
        nuclear
            .iter()
            .enumerate()
            .map(|(k, nuc)| Ok(self.bath_frequency(*nuc)? + mean_field.map_or(0.0, |h| h[k])))
            .collect()
    }

    fn terms(&self, cluster: &[usize], nuclear: &[NuclearState], mean_field: Option<&[f64]>) -> Result<Terms> {
        self.check_cluster(cluster, nuclear, mean_field)?;
        let ClusterCouplings { central, pairs, .. } = self.cluster_couplings(cluster)?;
        Ok(Terms { single: self.single_terms(nuclear, mean_field)?, central, pairs })
    }

    /// Dense Hamiltonian of the central spin and `cluster` in the full space
    /// of dimension `3 * 2^n`.
    pub fn cluster_hamiltonian(
        &self,
        cluster: &[usize],
        nuclear: &[NuclearState],
        mean_field: Option<&[f64]>,
    ) -> Result<ClusterHamiltonian> {
        let terms = self.terms(cluster, nuclear, mean_field)?;
        let n = cluster.len();
        let nb = 1usize << n;
        let dim = 3 * nb;
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for c in 0..3 {
            let m = central_m(c);
            let e = self.central_energy(m);
            for bits in 0..nb {
                let src = c * nb + bits;
                h[(src, src)] += e;
                for (k, w) in terms.single.iter().enumerate() {
                    h[(src, src)] += w * sz_half(bits, k);
                }
                for &(k, mu, nu, v) in &terms.central {
                    if let (Some((c2, a1)), Some((b2, a2))) = (central_op(mu, c), bath_op(nu, bits, k)) {
                        h[(c2 * nb + b2, src)] += v * (a1 * a2);
                    }
                }
                for &(a, b, mu, nu, v) in &terms.pairs {
                    if let Some((b1, a1)) = bath_op(nu, bits, b) {
                        if let Some((b2, a2)) = bath_op(mu, b1, a) {
                            h[(c * nb + b2, src)] += v * (a1 * a2);
                        }
                    }
                }
            }
        }
        let err = hermiticity_error(&h);
        assert!(err <= 1e-12, "non-Hermitian cluster Hamiltonian ({err:e})");
        Ok(ClusterHamiltonian { dimension: dim, matrix: h, spin_index_map: cluster.to_vec() })
    }

    /// Bath-only Hamiltonian with the central spin frozen in level `m`,
    /// restricted to the bit patterns in `basis` (sorted ascending). Terms
    /// that would flip the central spin are dropped.
    pub fn conditional_hamiltonian(
        &self,
        cluster: &[usize],
        nuclear: &[NuclearState],
        mean_field: Option<&[f64]>,
        m: f64,
        basis: &[usize],
    ) -> Result<DMatrix<Complex64>> {
        self.check_cluster(cluster, nuclear, mean_field)?;
        let couplings = self.cluster_couplings(cluster)?;
        self.conditional_with(&couplings, nuclear, mean_field, m, basis)
    }

    /// As [`SpinSystem::conditional_hamiltonian`] with precomputed couplings.
    pub fn conditional_with(
        &self,
        couplings: &ClusterCouplings,
        nuclear: &[NuclearState],
        mean_field: Option<&[f64]>,
        m: f64,
        basis: &[usize],
    ) -> Result<DMatrix<Complex64>> {
        if nuclear.len() != couplings.n || mean_field.is_some_and(|h| h.len() != couplings.n) {
            return Err(invalid("nuclear assignment and mean field must cover every cluster member"));
        }
        let single = self.single_terms(nuclear, mean_field)?;
        let dim = basis.len();
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        let index = |bits: usize| basis.binary_search(&bits).ok();
        for (col, &bits) in basis.iter().enumerate() {
            for (k, w) in single.iter().enumerate() {
                h[(col, col)] += w * sz_half(bits, k);
            }
            for &(k, mu, nu, v) in &couplings.central {
                if mu != Z {
                    continue;
                }
                if let Some((b2, a2)) = bath_op(nu, bits, k) {
                    if let Some(row) = index(b2) {
                        h[(row, col)] += v * (m * a2);
                    }
                }
            }
            for &(a, b, mu, nu, v) in &couplings.pairs {
                if let Some((b1, a1)) = bath_op(nu, bits, b) {
                    if let Some((b2, a2)) = bath_op(mu, b1, a) {
                        if let Some(row) = index(b2) {
                            h[(row, col)] += v * (a1 * a2);
                        }
                    }
                }
            }
        }
        Ok(h)
    }
}

/// Central-bath and bath-bath coupling terms of one cluster, in spherical
/// components, with the model's selection already applied.
#[derive(Debug, Clone)]
pub struct ClusterCouplings {
    n: usize,
    central: Vec<(usize, usize, usize, Complex64)>,
    pairs: Vec<(usize, usize, usize, usize, Complex64)>,
}

struct Terms {
    single: Vec<f64>,
    central: Vec<(usize, usize, usize, Complex64)>,
    pairs: Vec<(usize, usize, usize, usize, Complex64)>,
}

/// m_s of central basis index c.
pub fn central_m(c: usize) -> f64 {
    1.0 - c as f64
}

/// Central basis index of level m.
pub fn central_index(m: f64) -> usize {
    (1.0 - m).round() as usize
}

/// P_z eigenvalue of bath spin k in pattern `bits`.
#[inline]
pub fn sz_half(bits: usize, k: usize) -> f64 {
    if bits >> k & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

#[inline]
fn bath_op(op: usize, bits: usize, k: usize) -> Option<(usize, f64)> {
    let down = bits >> k & 1 == 1;
    match op {
        PLUS if down => Some((bits & !(1 << k), 1.0)),
        MINUS if !down => Some((bits | (1 << k), 1.0)),
        Z => Some((bits, if down { -0.5 } else { 0.5 })),
        _ => None,
    }
}

#[inline]
fn central_op(op: usize, c: usize) -> Option<(usize, f64)> {
    let m = central_m(c);
    match op {
        PLUS if m < 1.0 => Some((c - 1, (2.0 - m * (m + 1.0)).sqrt())),
        MINUS if m > -1.0 => Some((c + 1, (2.0 - m * (m - 1.0)).sqrt())),
        Z => Some((c, m)),
        _ => None,
    }
}

/// All n-bit patterns with the same number of set bits as `bits`, ascending.
pub fn magnetization_sector(n: usize, bits: usize) -> Vec<usize> {
    let ones = bits.count_ones();
    (0..1usize << n).filter(|b| b.count_ones() == ones).collect()
}
