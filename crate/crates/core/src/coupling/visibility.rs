//! Visibility of the nearest bath spin against the dephasing of the rest.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::median;
use crate::bath::{
    effective_thickness, generate_bath, mean_nn_distance_formula, ppm_to_number_density, BathConfiguration, BathGeometry,
    PlacementMode,
};
use crate::cce::{a_bath, bath_couplings};
use crate::error::{invalid, Error, Result};
use crate::seeds;
use crate::spin_model::ModelParams;

use super::nn::{gamma_slab, NNDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySample {
    /// `|A_0| / (sqrt(2) A_bath)`; infinite for a silent remainder.
    pub nu: f64,
    /// Secular coupling of the nearest spin, rad/ms.
    pub a0: f64,
    /// Of every other spin, rad/ms.
    pub a_bath: f64,
    pub nearest: usize,
    /// nm
    pub r_nn: f64,
}

/// Visibility from per-spin couplings and distances.
pub fn visibility_from(couplings: &[f64], distances: &[f64]) -> Result<VisibilitySample> {
    if couplings.len() < 2 {
        return Err(Error::VisibilityUndefined(format!("{} bath spins, need at least 2", couplings.len())));
    }
    let nearest = distances
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let a0 = couplings[nearest];
    let ab = a_bath(couplings.iter().enumerate().filter(|(i, _)| *i != nearest).map(|(_, a)| *a));
    let nu = if ab > 0.0 { a0.abs() / (SQRT_2 * ab) } else { f64::INFINITY };
    Ok(VisibilitySample { nu, a0, a_bath: ab, nearest, r_nn: distances[nearest] })
}

pub fn visibility(config: &BathConfiguration, params: &ModelParams) -> Result<VisibilitySample> {
    let couplings = bath_couplings(config, &params.central, &params.constants)?;
    let distances: Vec<f64> = config.spins.iter().map(|s| (s.position - config.central_position).norm()).collect();
    visibility_from(&couplings, &distances)
}

/// Lateral radius in units of the larger of the sheet and bulk mean
/// nearest-neighbour distances; the remainder sum converges as `R^-4`.
pub const LATERAL_FACTOR: f64 = 6.0;

/// Cylinder radius that keeps the dephasing sum converged for a slab.
pub fn lateral_radius_for(density_ppm: f64, thickness: f64, params: &ModelParams) -> Result<f64> {
    let bulk = mean_nn_distance_formula(density_ppm, &params.constants)?;
    let sheet = NNDistribution::sheet(density_ppm, thickness, &params.constants)?.mean();
    Ok(LATERAL_FACTOR * bulk.max(sheet.min(1e4)))
}

/// Thin over thick slab visibility. The primary estimate averages
/// `r_nn^-3 / (sqrt(2) Gamma_slab(r_nn))` over sampled baths, with the
/// dephasing sum replaced by its slab integral outside the nearest spin;
/// the direct average of `|A_0| / (sqrt(2) A_bath)` is dominated by rare
/// close spins and is reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRatio {
    pub density_ppm: f64,
    pub thin: f64,
    pub thick: f64,
    pub mean_thin: f64,
    pub mean_thick: f64,
    /// `mean_thin / mean_thick`
    pub ratio: f64,
    /// Propagated standard error of the ratio.
    pub ratio_stderr: f64,
    pub direct_mean_thin: f64,
    pub direct_mean_thick: f64,
    pub direct_ratio: f64,
    pub direct_ratio_stderr: f64,
    /// Ratio of the medians of the direct visibility.
    pub direct_median_ratio: f64,
    /// Configurations with fewer than two spins, per slab.
    pub n_undefined: (usize, usize),
    pub n_configs: usize,
    pub warnings: Vec<String>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Monte-Carlo `<nu>` in a thin and a thick slab and their ratio. Both
/// slabs use the same configuration seeds.
pub fn visibility_ratio_2d3d(
    density_ppm: f64,
    thin: f64,
    thick: f64,
    n_configs: usize,
    seed: u64,
    params: &ModelParams,
) -> Result<VisibilityRatio> {
    if n_configs < 2 {
        return Err(invalid("need at least two configurations"));
    }
    if !(thin > 0.0 && thick >= thin) {
        return Err(invalid("need 0 < thin <= thick"));
    }
    let r_nn = mean_nn_distance_formula(density_ppm, &params.constants)?;
    let mut warnings = Vec::new();
    if thin > 0.5 * r_nn {
        warnings.push(format!("thin slab {thin} nm is not well below <r_nn> = {r_nn:.2} nm"));
    }
    if thick < 2.0 * r_nn {
        warnings.push(format!("thick slab {thick} nm is not well above <r_nn> = {r_nn:.2} nm"));
    }
    let rho = ppm_to_number_density(density_ppm, &params.constants)?;
    let run = |t: f64| -> Result<(Vec<(f64, f64)>, usize)> {
        let g = BathGeometry::new(density_ppm, t, lateral_radius_for(density_ppm, t, params)?)?
            .with_isotope(params.p1.isotope)
            .with_placement(PlacementMode::LatticeSite);
        let t_eff = effective_thickness(t, &params.constants);
        let out: Vec<Result<Option<(f64, f64)>>> = (0..n_configs)
            .into_par_iter()
            .map(|k| {
                let c = generate_bath(&g, seeds::derive(seed, &[seeds::tag::YIELD, k as u64]), &params.constants)?;
                match visibility(&c, params) {
                    Ok(v) => {
                        let slab = v.r_nn.powi(-3) / (SQRT_2 * gamma_slab(rho, t_eff, v.r_nn)?);
                        Ok(Some((slab, v.nu)))
                    }
                    Err(Error::VisibilityUndefined(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect();
        let mut nus = Vec::with_capacity(n_configs);
        let mut undefined = 0;
        for o in out {
            match o? {
                Some(pair) if pair.1.is_finite() => nus.push(pair),
                _ => undefined += 1,
            }
        }
        Ok((nus, undefined))
    };
    let (a, ua) = run(thin)?;
    let (b, ub) = run(thick)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::VisibilityUndefined("too few configurations with two or more spins".into()));
    }
    let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
    let ((sa_v, da_v), (sb_v, db_v)) = (split(&a), split(&b));
    let ratio_of = |x: &[f64], y: &[f64]| {
        let ((mx, sx), (my, sy)) = (mean_se(x), mean_se(y));
        let r = mx / my;
        (mx, my, r, r * ((sx / mx).powi(2) + (sy / my).powi(2)).sqrt())
    };
    let (ma, mb, ratio, ratio_stderr) = ratio_of(&sa_v, &sb_v);
    let (dma, dmb, direct_ratio, direct_ratio_stderr) = ratio_of(&da_v, &db_v);
    let direct_median_ratio = median(&da_v).unwrap_or(f64::NAN) / median(&db_v).unwrap_or(f64::NAN);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(VisibilityRatio {
        density_ppm,
        thin,
        thick,
        mean_thin: ma,
        mean_thick: mb,
        ratio,
        ratio_stderr,
        direct_mean_thin: dma,
        direct_mean_thick: dmb,
        direct_ratio,
        direct_ratio_stderr,
        direct_median_ratio,
        n_undefined: (ua, ub),
        n_configs,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathGeometry;
    use crate::spin_model::secular_azz;
    use nalgebra::{Rotation3, Vector3};
    use crate::spin_model::Isotope;
    use proptest::prelude::*;

    fn default_params() -> ModelParams {
        ModelParams::default_for(Isotope::N15)
    }

    fn config(positions: &[Vector3<f64>]) -> BathConfiguration {
        BathConfiguration::from_positions(positions, BathGeometry::new(1.0, 100.0, 100.0).unwrap())
    }

    #[test]
    fn two_equidistant_on_axis_spins() {
        // A_0 = A, A_bath = |A|/2, nu = A / (sqrt(2) A / 2) = sqrt(2)
        let p = default_params();
        let ax = p.central.quantization_axis;
        let c = config(&[ax * 2.0, ax * -2.0]);
        let v = visibility(&c, &p).unwrap();
        assert!((v.nu - std::f64::consts::SQRT_2).abs() < 1e-12);
        let a = secular_azz(&Vector3::zeros(), &(ax * 2.0), &ax, p.central.qubit_levels, &p.constants).unwrap();
        assert!((v.a_bath - a.abs() / 2.0).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn isolated_close_spin_is_very_visible() {
        let p = default_params();
        let ax = p.central.quantization_axis;
        let mut pos = vec![ax * 1.0];
        // 99 spins ten times farther, spread over directions
        for k in 0..99 {
            let th = std::f64::consts::PI * (k as f64 + 0.5) / 99.0;
            let ph = 2.399_963 * k as f64;
            pos.push(Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * 10.0);
        }
        let v = visibility(&config(&pos), &p).unwrap();
        assert_eq!(v.nearest, 0);
        assert!(v.nu > 20.0 * std::f64::consts::TAU, "nu {}", v.nu);
    }

    #[test]
    fn fewer_than_two_spins_is_undefined() {
        let p = default_params();
        assert!(matches!(visibility(&config(&[Vector3::new(1.0, 0.0, 0.0)]), &p), Err(Error::VisibilityUndefined(_))));
    }

    #[test]
    fn identical_slabs_give_unit_ratio() {
        let r = visibility_ratio_2d3d(3.0, 5.0, 5.0, 50, 4, &default_params()).unwrap();
        assert_eq!(r.ratio, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rotation_with_axis_leaves_nu(ax in -3.0..3.0f64, ay in -3.0..3.0f64, az in -3.0..3.0f64,
                                        pts in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 2..12)) {
            let mut p = default_params();
            let pos: Vec<Vector3<f64>> = pts.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).filter(|v| v.norm() > 0.2).collect();
            prop_assume!(pos.len() >= 2);
            let a = visibility(&config(&pos), &p).unwrap();
            let rot = Rotation3::new(Vector3::new(ax, ay, az));
            p.central.quantization_axis = rot * p.central.quantization_axis;
            let rpos: Vec<Vector3<f64>> = pos.iter().map(|v| rot * v).collect();
            let b = visibility(&config(&rpos), &p).unwrap();
            prop_assert!((a.nu - b.nu).abs() <= 1e-9 * a.nu.max(1.0));
        }
    }
}
