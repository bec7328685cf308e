//! Reference propagation of the central spin and the whole bath in the full
//! Hilbert space, assembled from Cartesian Kronecker products. Practical up
//! to about eight bath spins; used to check the expansion.

use nalgebra::DVector;
use num_complex::Complex64;

use super::curve::CoherenceCurve;
use super::propagate::BathState;
use super::sequence::PulseSequence;
use crate::bath::BathConfiguration;
use crate::error::{invalid, Result};
use crate::seeds;
use crate::spin_model::ops::{cartesian, identity, kron, CMatrix};
use crate::spin_model::{dipolar_tensor, hyperfine_table, nv_frame, CouplingModel, FieldConfig, ModelParams};

type CVector = DVector<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Full Hamiltonian, central factor first, bath spin 0 the most significant
/// bath factor. Central basis m = +1, 0, -1; bath basis up, down.
pub fn full_hamiltonian(
    config: &BathConfiguration,
    params: &ModelParams,
    field: FieldConfig,
    model: CouplingModel,
    state: &BathState,
) -> Result<CMatrix> {
    let n = config.spins.len();
    if n > 10 {
        return Err(invalid("exact reference limited to 10 bath spins"));
    }
    let s = cartesian(1.0);
    let p = cartesian(0.5);
    let id2 = identity(2);
    let embed = |op: &CMatrix, k: usize| {
        (0..n).fold(identity(1), |acc, j| kron(&acc, if j == k { op } else { &id2 }))
    };
    let ib = identity(1 << n);
    let i3 = identity(3);
    let g = params.constants.gamma_e;
    let b = field.b_z;
    let d = params.central.zero_field_splitting;
    let axis = params.central.quantization_axis;
    let frame = nv_frame(&axis);
    let table = hyperfine_table(&params.p1, &field, &axis, &params.constants)?;

    let mut h = kron(&(&s[2] * &s[2] * c(d) - &s[2] * c(g * b)), &ib);
    let rel: Vec<_> = config.spins.iter().map(|sp| frame * (sp.position - config.central_position)).collect();
    for k in 0..n {
        let w = -g * b + table.shift(state.nuclear[k].m, state.nuclear[k].axis)?;
        let pk: Vec<CMatrix> = p.iter().map(|op| embed(op, k)).collect();
        h += kron(&i3, &pk[2]) * c(w);
        let t = dipolar_tensor(&rel[k], g, g, &params.constants)?;
        match model {
            CouplingModel::Full => {
                for a in 0..3 {
                    for bb in 0..3 {
                        h += kron(&s[a], &pk[bb]) * c(t[(a, bb)]);
                    }
                }
            }
            CouplingModel::Secular => h += kron(&s[2], &pk[2]) * c(t[(2, 2)]),
        }
        for j in k + 1..n {
            let pj: Vec<CMatrix> = p.iter().map(|op| embed(op, j)).collect();
            let t = dipolar_tensor(&(rel[j] - rel[k]), g, g, &params.constants)?;
            let mut hb = CMatrix::zeros(1 << n, 1 << n);
            match model {
                CouplingModel::Full => {
                    for a in 0..3 {
                        for bb in 0..3 {
                            hb += &pk[a] * &pj[bb] * c(t[(a, bb)]);
                        }
                    }
                }
                CouplingModel::Secular => {
                    hb += &pk[2] * &pj[2] * c(t[(2, 2)]);
                    let xy = &pk[0] * &pj[0] + &pk[1] * &pj[1];
                    hb += xy * c((t[(0, 0)] + t[(1, 1)]) / 2.0);
                }
            }
            h += kron(&i3, &hb);
        }
    }
    Ok(h)
}

/// Kronecker index of a bath product state (spin 0 most significant).
fn bath_index(state: &BathState) -> usize {
    state.down.iter().fold(0, |acc, &d| (acc << 1) | usize::from(d))
}

/// `exp(-i H dt)` applied to vectors through one eigendecomposition.
struct Propagator {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl Propagator {
    fn new(h: CMatrix) -> Self {
        let e = h.symmetric_eigen();
        Propagator { values: e.eigenvalues.iter().copied().collect(), vectors: e.eigenvectors }
    }

    fn apply(&self, psi: &CVector, dt: f64) -> CVector {
        let mut x = self.vectors.ad_mul(psi);
        for (xi, &e) in x.iter_mut().zip(&self.values) {
            *xi *= Complex64::from_polar(1.0, -e * dt);
        }
        &self.vectors * x
    }
}

/// Coherence of the full system started in `(|q0> + |q1>)/sqrt(2) (x) |state>`.
pub fn exact_coherence(
    config: &BathConfiguration,
    params: &ModelParams,
    field: FieldConfig,
    model: CouplingModel,
    state: &BathState,
    seq: &PulseSequence,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let h = full_hamiltonian(config, params, field, model, state)?;
    let nb = h.nrows() / 3;
    let (q0, q1) = params.central.qubit_levels;
    let idx = |m: i8| (1 - m) as usize;
    let (c0, c1) = (idx(q0), idx(q1));
    let free = |m: i8| {
        let m = f64::from(m);
        params.central.zero_field_splitting * m * m - params.constants.gamma_e * field.b_z * m
    };

    // When no term couples different central levels, evolve each level block
    // in the frame of its free energy (numerically gentler), else the whole.
    let mut off_block = 0.0f64;
    for r in 0..h.nrows() {
        for col in 0..h.ncols() {
            if r / nb != col / nb {
                off_block = off_block.max(h[(r, col)].norm());
            }
        }
    }
    let blocks: Option<Vec<Propagator>> = (off_block == 0.0).then(|| {
        (0..3)
            .map(|cb| {
                let mut blk = h.view((cb * nb, cb * nb), (nb, nb)).into_owned();
                let e = free(1 - cb as i8);
                for k in 0..nb {
                    blk[(k, k)] -= c(e);
                }
                Propagator::new(blk)
            })
            .collect()
    });
    let whole = if blocks.is_none() { Some(Propagator::new(h.clone())) } else { None };

    let b0 = bath_index(state);
    let k_last = seq.n_pulses();
    let de = free(q0) - free(q1);
    Ok(times
        .iter()
        .map(|&t| {
            let mut psi = CVector::zeros(3 * nb);
            psi[c0 * nb + b0] = c(std::f64::consts::FRAC_1_SQRT_2);
            psi[c1 * nb + b0] = c(std::f64::consts::FRAC_1_SQRT_2);
            let mut phase = 0.0;
            for (k, &dt) in seq.segments(t).iter().enumerate() {
                psi = match (&blocks, &whole) {
                    (Some(bl), _) => {
                        let mut out = CVector::zeros(3 * nb);
                        for (cb, prop) in bl.iter().enumerate() {
                            let part = psi.rows(cb * nb, nb).into_owned();
                            out.rows_mut(cb * nb, nb).copy_from(&prop.apply(&part, dt));
                        }
                        out
                    }
                    (None, Some(w)) => {
                        let sign = if (k_last - k) % 2 == 0 { 1.0 } else { -1.0 };
                        phase += sign * de * dt;
                        w.apply(&psi, dt)
                    }
                    _ => unreachable!(),
                };
                if k < k_last {
                    let mut swapped = psi.clone();
                    for bb in 0..nb {
                        swapped[c0 * nb + bb] = psi[c1 * nb + bb];
                        swapped[c1 * nb + bb] = psi[c0 * nb + bb];
                    }
                    psi = swapped;
                }
            }
            let raw: Complex64 = (0..nb).map(|bb| psi[c0 * nb + bb] * psi[c1 * nb + bb].conj()).sum();
            raw * 2.0 * Complex64::from_polar(1.0, phase)
        })
        .collect())
}

/// Exact coherence averaged over the same sampled bath states the CCE engine
/// draws for `seed`.
pub fn exact_sampled(
    config: &BathConfiguration,
    params: &ModelParams,
    field: FieldConfig,
    model: CouplingModel,
    n_states: usize,
    seed: u64,
    seq: &PulseSequence,
    times: &[f64],
) -> Result<CoherenceCurve> {
    let table = hyperfine_table(&params.p1, &field, &params.central.quantization_axis, &params.constants)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); times.len()];
    for s in 0..n_states {
        let mut rng = seeds::rng(seed, &[seeds::tag::STATES, s as u64]);
        let state = BathState::sample(config.spins.len(), &table.projections, &mut rng);
        for (a, v) in acc.iter_mut().zip(exact_coherence(config, params, field, model, &state, seq, times)?) {
            *a += v;
        }
    }
    let norm = 1.0 / n_states as f64;
    Ok(CoherenceCurve::new(times.to_vec(), acc.into_iter().map(|z| z * norm).collect()).with_meta("route", "exact"))
}
