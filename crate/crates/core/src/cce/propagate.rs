//! Unitary evolution of the central spin and one cluster.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use super::sequence::{PulseSequence, Propagator};
use crate::error::{Error, Result};
use crate::spin_model::hamiltonian::{central_index, magnetization_sector};
use crate::spin_model::{ClusterCouplings, NuclearState, SpinSystem};

type CVector = DVector<Complex64>;
type CMatrix = DMatrix<Complex64>;

/// Product state of the whole bath plus its static nuclear data.
#[derive(Debug, Clone, PartialEq)]
pub struct BathState {
    /// true: spin down (P_z = -1/2)
    pub down: Vec<bool>,
    pub nuclear: Vec<NuclearState>,
}

impl BathState {
    /// Random projections; nuclear state and axis redrawn as well.
    pub fn sample<R: Rng>(n: usize, projections: &[f64], rng: &mut R) -> Self {
        let mut down = Vec::with_capacity(n);
        let mut nuclear = Vec::with_capacity(n);
        for _ in 0..n {
            down.push(rng.random::<bool>());
            nuclear.push(NuclearState { m: projections[rng.random_range(0..projections.len())], axis: rng.random_range(0..4) });
        }
        BathState { down, nuclear }
    }

    pub fn sz(&self, i: usize) -> f64 {
        if self.down[i] {
            -0.5
        } else {
            0.5
        }
    }

    /// Bit pattern of the cluster members (bit k for `cluster[k]`).
    pub fn bits(&self, cluster: &[usize]) -> usize {
        cluster.iter().enumerate().fold(0, |acc, (k, &i)| if self.down[i] { acc | 1 << k } else { acc })
    }

    pub fn nuclear_of(&self, cluster: &[usize]) -> Vec<NuclearState> {
        cluster.iter().map(|&i| self.nuclear[i]).collect()
    }
}

/// Initial state and static data of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub bits: usize,
    pub nuclear: Vec<NuclearState>,
    /// Static field on each member from spins outside the cluster, rad/ms.
    pub mean_field: Option<Vec<f64>>,
}

struct Eig {
    e: Vec<f64>,
    v: CMatrix,
}

fn eig(h: CMatrix, cluster: &[usize]) -> Result<Eig> {
    if h.nrows() == 1 {
        return Ok(Eig { e: vec![h[(0, 0)].re], v: CMatrix::identity(1, 1) });
    }
    let (e, v) = if h.iter().all(|z| z.im == 0.0) {
        // real symmetric (secular couplings): the real solver is much cheaper
        let d = h.map(|z| z.re).symmetric_eigen();
        (d.eigenvalues.iter().copied().collect::<Vec<_>>(), d.eigenvectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        let d = h.symmetric_eigen();
        (d.eigenvalues.iter().copied().collect(), d.eigenvectors)
    };
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Propagation { cluster: cluster.to_vec(), reason: "non-finite eigenvalues".into() });
    }
    Ok(Eig { e, v })
}

impl Eig {
    fn evolve(&self, psi: &CVector, dt: f64) -> CVector {
        let mut c = self.v.ad_mul(psi);
        for (ck, &e) in c.iter_mut().zip(&self.e) {
            *ck *= Complex64::from_polar(1.0, -e * dt);
        }
        &self.v * c
    }
}

/// Coherence from two conditional evolutions: each branch alternates levels
/// at every pulse; `L = <branch ending on q1 | branch ending on q0>`.
///
/// Both branches are carried in eigen-coordinates; a level switch is a
/// product with the basis overlap `W = V0^dag V1` or its adjoint.
fn branch_overlap(levels: [&Eig; 2], init: usize, seq: &PulseSequence, times: &[f64]) -> Vec<Complex64> {
    let d = levels[0].e.len();
    let (v0, v1) = (&levels[0].v, &levels[1].v);
    let w = v0.ad_mul(v1);
    // coordinates of the initial basis state in each eigenbasis
    let start: [Vec<Complex64>; 2] =
        [(0..d).map(|i| v0[(init, i)].conj()).collect(), (0..d).map(|i| v1[(init, i)].conj()).collect()];
    let k_last = seq.n_pulses();
    let mut a = vec![Complex64::new(0.0, 0.0); d];
    let mut b = a.clone();
    let mut tmp = a.clone();
    let switch = |x: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>, from: usize| {
        // from level 0 coordinates to level 1: W^dag x; from 1 to 0: W x
        for (i, t) in tmp.iter_mut().enumerate() {
            *t = if from == 0 {
                (0..d).map(|j| w[(j, i)].conj() * x[j]).sum()
            } else {
                (0..d).map(|j| w[(i, j)] * x[j]).sum()
            };
        }
        std::mem::swap(x, tmp);
    };
    // phase factors of both levels for the current segment length
    let mut phases = [a.clone(), a.clone()];
    times
        .iter()
        .map(|&t| {
            let seg = seq.segments(t);
            a.copy_from_slice(&start[0]);
            b.copy_from_slice(&start[1]);
            let mut last_dt = f64::NAN;
            for (k, &dt) in seg.iter().enumerate() {
                if dt != last_dt {
                    for (ph, lv) in phases.iter_mut().zip(levels) {
                        for (p, &e) in ph.iter_mut().zip(&lv.e) {
                            *p = Complex64::from_polar(1.0, -e * dt);
                        }
                    }
                    last_dt = dt;
                }
                let (la, lb) = (k % 2, (k + 1) % 2);
                for (x, p) in a.iter_mut().zip(&phases[la]) {
                    *x *= p;
                }
                for (x, p) in b.iter_mut().zip(&phases[lb]) {
                    *x *= p;
                }
                if k < k_last {
                    switch(&mut a, &mut tmp, la);
                    switch(&mut b, &mut tmp, lb);
                }
            }
            // a ends on q0 when the pulse count is even; bring both to level-0 coordinates
            let (on_q0, on_q1) = if k_last % 2 == 0 { (&mut a, &mut b) } else { (&mut b, &mut a) };
            switch(on_q1, &mut tmp, 1);
            on_q1.iter().zip(on_q0.iter()).map(|(y, x)| y.conj() * x).sum()
        })
        .collect()
}

/// Coherence of the cluster for each initial pattern in `inits`, all drawn
/// from the same bath basis.
#[allow(clippy::too_many_arguments)]
fn conditional_curves(
    system: &SpinSystem,
    couplings: &ClusterCouplings,
    cluster: &[usize],
    nuclear: &[NuclearState],
    mean_field: Option<&[f64]>,
    basis: &[usize],
    inits: &[usize],
    seq: &PulseSequence,
    times: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    let (m0, m1) = system.qubit_levels();
    let mut h0 = system.conditional_with(couplings, nuclear, mean_field, m0, basis)?;
    let mut h1 = system.conditional_with(couplings, nuclear, mean_field, m1, basis)?;
    // A common constant cancels in the overlap; removing it keeps phases small.
    let shift = h0.diagonal().iter().map(|z| z.re).sum::<f64>() / basis.len() as f64;
    for k in 0..basis.len() {
        h0[(k, k)] -= shift;
        h1[(k, k)] -= shift;
    }
    let e0 = eig(h0, cluster)?;
    let e1 = eig(h1, cluster)?;
    Ok(inits
        .iter()
        .map(|bits| {
            let init = basis.binary_search(bits).expect("initial pattern lies in the basis");
            branch_overlap([&e0, &e1], init, seq, times)
        })
        .collect())
}

fn bath_basis(system: &SpinSystem, n: usize, bits: usize) -> Vec<usize> {
    if system.model.conserves_magnetization() {
        magnetization_sector(n, bits)
    } else {
        (0..1usize << n).collect()
    }
}

/// Exact evolution of the central spin times the cluster in the full
/// `3 * 2^n` space, with ideal pi pulses swapping the qubit levels and the
/// free central-spin phase removed.
fn full_space_curve(
    system: &SpinSystem,
    cluster: &[usize],
    state: &ClusterState,
    seq: &PulseSequence,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let n = cluster.len();
    let nb = 1usize << n;
    let (m0, m1) = system.qubit_levels();
    let (c0, c1) = (central_index(m0), central_index(m1));
    let mut h = system.cluster_hamiltonian(cluster, &state.nuclear, state.mean_field.as_deref())?.matrix;
    let shift = system.central_energy(m0);
    for k in 0..h.nrows() {
        h[(k, k)] -= shift;
    }
    let e = eig(h, cluster)?;
    let dim = 3 * nb;
    let mut start = CVector::zeros(dim);
    let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    start[c0 * nb + state.bits] = amp;
    start[c1 * nb + state.bits] = amp;
    let de = system.central_energy(m0) - system.central_energy(m1);
    let k_last = seq.n_pulses();
    Ok(times
        .iter()
        .map(|&t| {
            let seg = seq.segments(t);
            let mut psi = start.clone();
            let mut phase = 0.0;
            for (k, &dt) in seg.iter().enumerate() {
                psi = e.evolve(&psi, dt);
                if k < k_last {
                    for b in 0..nb {
                        psi.swap_rows(c0 * nb + b, c1 * nb + b);
                    }
                }
                let sign = if (k_last - k) % 2 == 0 { 1.0 } else { -1.0 };
                phase += sign * de * dt;
            }
            let raw: Complex64 = (0..nb).map(|b| psi[c0 * nb + b] * psi[c1 * nb + b].conj()).sum::<Complex64>() * 2.0;
            raw * Complex64::from_polar(1.0, phase)
        })
        .collect())
}

/// Coherence `L_C(t)` of one cluster in one product state.
pub fn cluster_contribution(
    system: &SpinSystem,
    cluster: &[usize],
    state: &ClusterState,
    seq: &PulseSequence,
    times: &[f64],
    propagator: Propagator,
) -> Result<Vec<Complex64>> {
    let couplings = system.cluster_couplings(cluster)?;
    cluster_contribution_with(system, cluster, &couplings, state, seq, times, propagator)
}

pub(crate) fn cluster_contribution_with(
    system: &SpinSystem,
    cluster: &[usize],
    couplings: &ClusterCouplings,
    state: &ClusterState,
    seq: &PulseSequence,
    times: &[f64],
    propagator: Propagator,
) -> Result<Vec<Complex64>> {
    if cluster.is_empty() {
        return Ok(vec![Complex64::new(1.0, 0.0); times.len()]);
    }
    match propagator {
        Propagator::Exact if !system.model.conserves_central_sz() => full_space_curve(system, cluster, state, seq, times),
        // With S_z conserved the full-space blocks are exactly the
        // conditional Hamiltonians plus the free central energies.
        _ => {
            let basis = bath_basis(system, cluster.len(), state.bits);
            let mut curves = conditional_curves(
                system,
                couplings,
                cluster,
                &state.nuclear,
                state.mean_field.as_deref(),
                &basis,
                &[state.bits],
                seq,
                times,
            )?;
            Ok(curves.pop().unwrap())
        }
    }
}

/// `L_C(t)` averaged over all `2^n` spin product states with fixed nuclear data.
pub fn ensemble_contribution(
    system: &SpinSystem,
    cluster: &[usize],
    nuclear: &[NuclearState],
    seq: &PulseSequence,
    times: &[f64],
    propagator: Propagator,
) -> Result<Vec<Complex64>> {
    let n = cluster.len();
    let nb = 1usize << n;
    let mut acc = vec![Complex64::new(0.0, 0.0); times.len()];
    let exact_full = matches!(propagator, Propagator::Exact) && !system.model.conserves_central_sz();
    let couplings = system.cluster_couplings(cluster)?;
    if exact_full {
        for bits in 0..nb {
            let st = ClusterState { bits, nuclear: nuclear.to_vec(), mean_field: None };
            for (a, v) in acc.iter_mut().zip(full_space_curve(system, cluster, &st, seq, times)?) {
                *a += v;
            }
        }
    } else if system.model.conserves_magnetization() {
        for ones in 0..=n {
            let basis: Vec<usize> = (0..nb).filter(|b| b.count_ones() as usize == ones).collect();
            for curve in conditional_curves(system, &couplings, cluster, nuclear, None, &basis, &basis, seq, times)? {
                for (a, v) in acc.iter_mut().zip(curve) {
                    *a += v;
                }
            }
        }
    } else {
        let basis: Vec<usize> = (0..nb).collect();
        for curve in conditional_curves(system, &couplings, cluster, nuclear, None, &basis, &basis, seq, times)? {
            for (a, v) in acc.iter_mut().zip(curve) {
                *a += v;
            }
        }
    }
    let norm = 1.0 / nb as f64;
    Ok(acc.into_iter().map(|z| z * norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::{CouplingModel, FieldConfig, Isotope, ModelParams};
    use nalgebra::Vector3;

    fn system(model: CouplingModel, positions: &[Vector3<f64>]) -> SpinSystem {
        let p = ModelParams::default_for(Isotope::N15);
        SpinSystem::new(&p, FieldConfig::default(), model, &Vector3::zeros(), positions).unwrap()
    }

    fn nuc(n: usize) -> Vec<NuclearState> {
        vec![NuclearState { m: 0.5, axis: 0 }; n]
    }

    fn times() -> Vec<f64> {
        (0..40).map(|k| k as f64 * 2e-3).collect()
    }

    #[test]
    fn empty_cluster_is_unity() {
        let sys = system(CouplingModel::Full, &[]);
        let st = ClusterState { bits: 0, nuclear: vec![], mean_field: None };
        let l = cluster_contribution(&sys, &[], &st, &PulseSequence::hahn_echo(), &times(), Propagator::Exact).unwrap();
        assert!(l.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn echo_refocuses_static_coupling() {
        let sys = system(CouplingModel::Secular, &[Vector3::new(1.0, 0.5, 0.2)]);
        for bits in 0..2 {
            let st = ClusterState { bits, nuclear: nuc(1), mean_field: None };
            for prop in [Propagator::Conditional, Propagator::Exact] {
                let l = cluster_contribution(&sys, &[0], &st, &PulseSequence::hahn_echo(), &times(), prop).unwrap();
                for z in l {
                    assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-9, "{z}");
                }
            }
        }
    }

    #[test]
    fn single_spin_ramsey_phase() {
        let sys = system(CouplingModel::Secular, &[Vector3::new(1.0, 0.5, 0.2)]);
        let a = sys.azz(0);
        let ts = times();
        let up = ClusterState { bits: 0, nuclear: nuc(1), mean_field: None };
        let l = cluster_contribution(&sys, &[0], &up, &PulseSequence::ramsey(), &ts, Propagator::Conditional).unwrap();
        for (t, z) in ts.iter().zip(&l) {
            // branch difference (m0 - m1) * zz * (+1/2) = -A_z / 2
            let expected = Complex64::from_polar(1.0, a * t / 2.0);
            assert!((z - expected).norm() < 1e-9);
        }
        let ens = ensemble_contribution(&sys, &[0], &nuc(1), &PulseSequence::ramsey(), &ts, Propagator::Conditional)
            .unwrap();
        for (t, z) in ts.iter().zip(&ens) {
            assert!((z.re - (a * t / 2.0).cos()).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }

    /// Independent 12-dimensional propagation with matrix exponentials by
    /// eigendecomposition of the full Hamiltonian and explicit pulse matrices.
    fn brute_force(sys: &SpinSystem, bits: usize, seq: &PulseSequence, ts: &[f64]) -> Vec<Complex64> {
        let h = sys.cluster_hamiltonian(&[0, 1], &nuc(2), None).unwrap().matrix;
        let d = h.clone().symmetric_eigen();
        let u = |dt: f64| {
            let ph = CMatrix::from_diagonal(&d.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt)));
            &d.eigenvectors * ph * d.eigenvectors.adjoint()
        };
        let mut x = CMatrix::identity(12, 12);
        for b in 0..4 {
            // pi pulse swaps m = 0 (index 1) and m = -1 (index 2)
            x[(4 + b, 4 + b)] = Complex64::new(0.0, 0.0);
            x[(8 + b, 8 + b)] = Complex64::new(0.0, 0.0);
            x[(4 + b, 8 + b)] = Complex64::new(1.0, 0.0);
            x[(8 + b, 4 + b)] = Complex64::new(1.0, 0.0);
        }
        let e0 = sys.central_energy(0.0);
        let e1 = sys.central_energy(-1.0);
        ts.iter()
            .map(|&t| {
                let mut psi = CVector::zeros(12);
                psi[4 + bits] = Complex64::new(0.5f64.sqrt(), 0.0);
                psi[8 + bits] = Complex64::new(0.5f64.sqrt(), 0.0);
                let seg = seq.segments(t);
                let mut free = CVector::from_vec(vec![Complex64::new(0.5f64.sqrt(), 0.0); 2]);
                for (k, &dt) in seg.iter().enumerate() {
                    psi = u(dt) * psi;
                    free[0] *= Complex64::from_polar(1.0, -e0 * dt);
                    free[1] *= Complex64::from_polar(1.0, -e1 * dt);
                    if k + 1 < seg.len() {
                        psi = &x * psi;
                        free.swap_rows(0, 1);
                    }
                }
                let raw: Complex64 = (0..4).map(|b| psi[4 + b] * psi[8 + b].conj()).sum();
                let free_raw = free[0] * free[1].conj();
                raw / free_raw
            })
            .collect()
    }

    #[test]
    fn two_spin_flip_flop_echo_matches_brute_force() {
        let positions = [Vector3::new(0.8, 0.3, 0.5), Vector3::new(1.4, 0.9, 0.9)];
        let ts: Vec<f64> = (0..30).map(|k| k as f64 * 1e-3).collect();
        for model in [CouplingModel::Secular, CouplingModel::Full] {
            let sys = system(model, &positions);
            for bits in 0..4 {
                let st = ClusterState { bits, nuclear: nuc(2), mean_field: None };
                let got =
                    cluster_contribution(&sys, &[0, 1], &st, &PulseSequence::hahn_echo(), &ts, Propagator::Exact).unwrap();
                let want = brute_force(&sys, bits, &PulseSequence::hahn_echo(), &ts);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).norm() < 1e-6, "{model:?} {bits}: {a} vs {b}");
                }
                if model == CouplingModel::Secular {
                    let cond = cluster_contribution(
                        &sys,
                        &[0, 1],
                        &st,
                        &PulseSequence::hahn_echo(),
                        &ts,
                        Propagator::Conditional,
                    )
                    .unwrap();
                    for (a, b) in cond.iter().zip(&want) {
                        assert!((a - b).norm() < 1e-6);
                    }
                }
            }
        }
        // the flip-flop pair actually decoheres in the mixed-spin sector
        let sys = system(CouplingModel::Secular, &positions);
        let st = ClusterState { bits: 0b01, nuclear: nuc(2), mean_field: None };
        let l = cluster_contribution(&sys, &[0, 1], &st, &PulseSequence::hahn_echo(), &ts, Propagator::Conditional)
            .unwrap();
        assert!(l.iter().any(|z| (z - Complex64::new(1.0, 0.0)).norm() > 1e-3), "{l:?}");
    }
}
