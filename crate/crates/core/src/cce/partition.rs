//! Strong/weak split of bath couplings and the analytic first-order Ramsey signal.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::curve::CoherenceCurve;
use crate::bath::BathConfiguration;
use crate::error::Result;
use crate::spin_model::{secular_azz, CentralSpinParams, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongSpin {
    pub index: usize,
    /// rad/ms
    pub a_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongWeakPartition {
    /// In selection order (descending |A_z|).
    pub strong: Vec<StrongSpin>,
    pub weak: Vec<usize>,
    /// rad/ms
    pub a_bath: f64,
    /// ms; infinite when the weak set is empty.
    pub t2_star: f64,
}

/// Secular couplings of every bath spin, rad/ms.
pub fn bath_couplings(
    config: &BathConfiguration,
    central: &CentralSpinParams,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    config
        .spins
        .iter()
        .map(|s| {
            secular_azz(&config.central_position, &s.position, &central.quantization_axis, central.qubit_levels, constants)
        })
        .collect()
}

/// `A_bath = sqrt(sum A^2 / 4)`.
pub fn a_bath(couplings: impl IntoIterator<Item = f64>) -> f64 {
    couplings.into_iter().map(|a| a * a / 4.0).sum::<f64>().sqrt()
}

/// `sqrt(2) / A_bath`, infinite for a silent bath.
pub fn t2_star_from_a_bath(a_bath: f64) -> f64 {
    if a_bath > 0.0 {
        SQRT_2 / a_bath
    } else {
        f64::INFINITY
    }
}

/// Greedy selection: take spins in descending |A_z| while
/// `|A_z|/2 >= 2 pi A_bath(rest) / sqrt(2)`, where the rest excludes every
/// spin selected so far and the candidate itself.
pub fn partition_couplings(a_z: &[f64]) -> StrongWeakPartition {
    let mut order: Vec<usize> = (0..a_z.len()).collect();
    order.sort_by(|&i, &j| a_z[j].abs().total_cmp(&a_z[i].abs()).then(i.cmp(&j)));
    // suffix[k] = sum over order[k..] of A^2/4, accumulated from the weakest
    let mut suffix = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        let a = a_z[order[k]];
        suffix[k] = suffix[k + 1] + a * a / 4.0;
    }
    let mut n_strong = 0;
    while n_strong < order.len() {
        let a = a_z[order[n_strong]].abs();
        let rest = suffix[n_strong + 1].sqrt();
        if a / 2.0 >= 2.0 * PI * rest / SQRT_2 {
            n_strong += 1;
        } else {
            break;
        }
    }
    let strong = order[..n_strong].iter().map(|&index| StrongSpin { index, a_z: a_z[index] }).collect();
    let mut weak = order[n_strong..].to_vec();
    weak.sort_unstable();
    let a_bath = suffix[n_strong].sqrt();
    StrongWeakPartition { strong, weak, a_bath, t2_star: t2_star_from_a_bath(a_bath) }
}

pub fn partition_strong_weak(
    config: &BathConfiguration,
    central: &CentralSpinParams,
    constants: &PhysicalConstants,
) -> Result<StrongWeakPartition> {
    Ok(partition_couplings(&bath_couplings(config, central, constants)?))
}

/// `exp(-(t/T2*)^2) * prod_strong cos(A_z t / 2)`.
pub fn ramsey_cce1_analytic(partition: &StrongWeakPartition, times: &[f64]) -> CoherenceCurve {
    let values = times
        .iter()
        .map(|&t| {
            let env = if partition.t2_star.is_finite() { (-(t / partition.t2_star).powi(2)).exp() } else { 1.0 };
            let osc: f64 = partition.strong.iter().map(|s| (s.a_z * t / 2.0).cos()).product();
            Complex64::new(env * osc, 0.0)
        })
        .collect();
    CoherenceCurve::new(times.to_vec(), values).with_meta("route", "analytic-cce1")
}

/// Product of the strong-spin cosines alone.
pub fn strong_factor(partition: &StrongWeakPartition, t: f64) -> f64 {
    partition.strong.iter().map(|s| (s.a_z * t / 2.0).cos()).product()
}

/// `prod_j cos(A_z^j t / 2)` over every spin.
pub fn cce1_exact_product(a_z: &[f64], times: &[f64]) -> CoherenceCurve {
    let values = times
        .iter()
        .map(|&t| Complex64::new(a_z.iter().map(|a| (a * t / 2.0).cos()).product(), 0.0))
        .collect();
    CoherenceCurve::new(times.to_vec(), values).with_meta("route", "cce1-product")
}
