//! Cluster correlation expansion with bath-state sampling.

use num_complex::Complex64;
use rayon::prelude::*;

use super::clusters::{enumerate_clusters, subcluster_table};
use super::curve::CoherenceCurve;
use super::propagate::{cluster_contribution_with, ensemble_contribution, BathState, ClusterState};
use super::sequence::{BathStateMode, BreakdownPolicy, CCEConfig, PulseSequence};
use crate::bath::BathConfiguration;
use crate::error::Result;
use crate::seeds;
use crate::spin_model::{FieldConfig, ModelParams, NuclearState, SpinSystem};

/// Denominators smaller than this in the irreducible division are floored.
pub const DIVISION_FLOOR: f64 = 1e-10;

/// A sampled product above `1 + BREAKDOWN_MARGIN` in magnitude marks the
/// expansion as broken down for that state.
pub const BREAKDOWN_MARGIN: f64 = 1e-6;

/// Fraction of floored contributions above which a warning is attached.
pub const FLOOR_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Default, Clone, Copy)]
struct FloorCount {
    floored: usize,
    total: usize,
}

/// Divide each cluster curve by its subclusters' irreducible parts and
/// multiply everything together. `raw` is ordered so subclusters come first.
fn irreducible_product(raw: &[Vec<Complex64>], subs: &[Vec<usize>], nt: usize) -> (Vec<Complex64>, FloorCount) {
    let mut tilde: Vec<Vec<Complex64>> = Vec::with_capacity(raw.len());
    let mut count = FloorCount::default();
    let mut product = vec![Complex64::new(1.0, 0.0); nt];
    for (c, curve) in raw.iter().enumerate() {
        let mut t_c = Vec::with_capacity(nt);
        for t in 0..nt {
            let denom: Complex64 = subs[c].iter().map(|&s| tilde[s][t]).product();
            count.total += 1;
            let v = if denom.norm() < DIVISION_FLOOR {
                count.floored += 1;
                Complex64::new(1.0, 0.0)
            } else {
                curve[t] / denom
            };
            product[t] *= v;
            t_c.push(v);
        }
        tilde.push(t_c);
    }
    (product, count)
}

/// Static zz field on each spin from every other spin in `state`.
fn total_fields(zz: &[Vec<f64>], state: &BathState) -> Vec<f64> {
    (0..zz.len()).map(|i| (0..zz.len()).filter(|&k| k != i).map(|k| zz[i][k] * state.sz(k)).sum()).collect()
}

/// Coherence of `config` under `sequence`, expanded to `cce.order`.
///
/// `seed` drives bath-state sampling; the result depends only on
/// (configuration, settings, seed).
pub fn cce_coherence(
    config: &BathConfiguration,
    params: &ModelParams,
    cce: &CCEConfig,
    sequence: &PulseSequence,
    field: FieldConfig,
    seed: u64,
) -> Result<CoherenceCurve> {
    cce.validate()?;
    sequence.validate()?;
    let system = SpinSystem::new(params, field, cce.coupling, &config.central_position, &config.positions())?;
    cce_with_system(&system, config, cce, sequence, seed)
}

pub(crate) fn cce_with_system(
    system: &SpinSystem,
    config: &BathConfiguration,
    cce: &CCEConfig,
    sequence: &PulseSequence,
    seed: u64,
) -> Result<CoherenceCurve> {
    let times = &cce.time_grid;
    let nt = times.len();
    let clusters = enumerate_clusters(system.positions(), cce.order, cce.dipole_radius, cce.max_clusters)?;
    let subs = subcluster_table(&clusters);
    let n = system.len();

    let mut dropped = 0usize;
    let (values, count, n_states) = match cce.mode {
        BathStateMode::Ensemble => {
            let nuclear: Vec<NuclearState> =
                config.spins.iter().map(|s| NuclearState { m: s.nuclear_m, axis: s.jt_axis }).collect();
            let raw = clusters
                .par_iter()
                .map(|c| {
                    let nuc: Vec<NuclearState> = c.iter().map(|&i| nuclear[i]).collect();
                    ensemble_contribution(system, c, &nuc, sequence, times, cce.propagator)
                })
                .collect::<Result<Vec<_>>>()?;
            let (v, count) = irreducible_product(&raw, &subs, nt);
            (v, count, 1)
        }
        BathStateMode::Sampled { mean_field } => {
            let zz: Vec<Vec<f64>> = if mean_field {
                (0..n)
                    .map(|i| (0..n).map(|k| if i == k { Ok(0.0) } else { system.pair_zz(i, k) }).collect())
                    .collect::<Result<_>>()?
            } else {
                vec![]
            };
            let projections = system.table.projections.clone();
            let couplings = clusters.iter().map(|c| system.cluster_couplings(c)).collect::<Result<Vec<_>>>()?;
            let mut acc = vec![Complex64::new(0.0, 0.0); nt];
            let mut kept = vec![0usize; nt];
            let mut count = FloorCount::default();
            for s in 0..cce.n_bath_states {
                let mut rng = seeds::rng(seed, &[seeds::tag::STATES, s as u64]);
                let state = BathState::sample(n, &projections, &mut rng);
                let fields = if mean_field { Some(total_fields(&zz, &state)) } else { None };
                let raw = clusters
                    .par_iter()
                    .zip(couplings.par_iter())
                    .map(|(c, cc)| {
                        let mf = fields.as_ref().map(|h| {
                            c.iter()
                                .map(|&i| h[i] - c.iter().filter(|&&k| k != i).map(|&k| zz[i][k] * state.sz(k)).sum::<f64>())
                                .collect()
                        });
                        let st = ClusterState { bits: state.bits(c), nuclear: state.nuclear_of(c), mean_field: mf };
                        cluster_contribution_with(system, c, cc, &st, sequence, times, cce.propagator)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (v, c) = irreducible_product(&raw, &subs, nt);
                count.floored += c.floored;
                count.total += c.total;
                let valid = match cce.breakdown {
                    BreakdownPolicy::Keep => nt,
                    BreakdownPolicy::Truncate => v.iter().position(|z| !(z.norm() <= 1.0 + BREAKDOWN_MARGIN)).unwrap_or(nt),
                };
                dropped += nt - valid;
                for ((a, k), x) in acc.iter_mut().zip(kept.iter_mut()).zip(v).take(valid) {
                    *a += x;
                    *k += 1;
                }
            }
            let values = acc
                .into_iter()
                .zip(kept)
                .map(|(z, k)| if k > 0 { z / k as f64 } else { Complex64::new(f64::NAN, f64::NAN) })
                .collect();
            (values, count, cce.n_bath_states)
        }
    };

    let mut curve = CoherenceCurve::new(times.clone(), values)
        .with_meta("route", "cce")
        .with_meta("order", cce.order)
        .with_meta("dipole_radius_nm", cce.dipole_radius)
        .with_meta("n_bath_states", n_states)
        .with_meta("mode", mode_name(cce.mode))
        .with_meta("coupling", format!("{:?}", cce.coupling).to_lowercase())
        .with_meta("propagator", format!("{:?}", cce.propagator).to_lowercase())
        .with_meta("n_spins", n)
        .with_meta("n_clusters", clusters.len())
        .with_meta("field_gauss", system.field.b_z)
        .with_meta("config_seed", config.seed)
        .with_meta("state_seed", seed)
        .with_meta("floored", count.floored)
        .with_meta("contributions", count.total)
        .with_meta("breakdown", format!("{:?}", cce.breakdown).to_lowercase())
        .with_meta("dropped_state_points", dropped);
    if count.total > 0 && count.floored as f64 > FLOOR_WARNING_FRACTION * count.total as f64 {
        log::warn!("{} of {} irreducible contributions floored", count.floored, count.total);
        curve = curve.with_meta("warning", format!("{} of {} contributions floored", count.floored, count.total));
    }
    Ok(curve)
}

pub fn mode_name(mode: BathStateMode) -> &'static str {
    match mode {
        BathStateMode::Ensemble => "ensemble",
        BathStateMode::Sampled { mean_field: true } => "sampled-mean-field",
        BathStateMode::Sampled { mean_field: false } => "sampled",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irreducible_division_telescopes() {
        // clusters {0}, {1}, {0,1}
        let raw = vec![
            vec![Complex64::new(0.9, 0.1)],
            vec![Complex64::new(0.8, -0.2)],
            vec![Complex64::new(0.5, 0.3)],
        ];
        let subs = vec![vec![], vec![], vec![0, 1]];
        let (p, c) = irreducible_product(&raw, &subs, 1);
        assert!((p[0] - raw[2][0]).norm() < 1e-15);
        assert_eq!(c.floored, 0);
        assert_eq!(c.total, 3);
    }

    #[test]
    fn tiny_denominators_are_floored() {
        let raw = vec![vec![Complex64::new(1e-12, 0.0)], vec![Complex64::new(0.3, 0.0)]];
        let subs = vec![vec![], vec![0]];
        let (p, c) = irreducible_product(&raw, &subs, 1);
        assert_eq!(c.floored, 1);
        assert!((p[0] - Complex64::new(1e-12, 0.0)).norm() < 1e-20);
    }
}
