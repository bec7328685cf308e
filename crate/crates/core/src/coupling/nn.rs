//! Nearest-neighbour distance laws of Poisson baths in two and three
//! dimensions, and the bath dephasing estimates built on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bath::ppm_to_number_density;
use crate::error::{invalid, Result};
use crate::spin_model::PhysicalConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "2D")]
    Two,
    #[serde(rename = "3D")]
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NNDistribution {
    pub dimensionality: Dimensionality,
    /// nm^-2 for 2D (`rho t`), nm^-3 for 3D.
    pub density: f64,
}

/// Nearest-neighbour law for a bath of `density` (per nm^2 or nm^3).
pub fn nn_pdf(dimensionality: Dimensionality, density: f64) -> Result<NNDistribution> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(invalid("density must be positive"));
    }
    Ok(NNDistribution { dimensionality, density })
}

impl NNDistribution {
    /// 3D law for a bath in ppm.
    pub fn bulk(density_ppm: f64, constants: &PhysicalConstants) -> Result<Self> {
        nn_pdf(Dimensionality::Three, ppm_to_number_density(density_ppm, constants)?)
    }

    /// 2D law for a slab of `thickness` nm, areal density `rho t`.
    pub fn sheet(density_ppm: f64, thickness: f64, constants: &PhysicalConstants) -> Result<Self> {
        nn_pdf(Dimensionality::Two, ppm_to_number_density(density_ppm, constants)? * thickness)
    }

    /// Exponent and prefactor of `P(r_nn > r) = exp(-c r^d)`.
    fn shape(&self) -> (f64, f64) {
        match self.dimensionality {
            Dimensionality::Two => (2.0, PI * self.density),
            Dimensionality::Three => (3.0, 4.0 * PI * self.density / 3.0),
        }
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if !(r >= 0.0) {
            return 0.0;
        }
        let (d, c) = self.shape();
        d * c * r.powf(d - 1.0) * (-c * r.powf(d)).exp()
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let (d, c) = self.shape();
        -(-c * r.powf(d)).exp_m1()
    }

    /// `Gamma(1 + 1/d) c^(-1/d)`.
    pub fn mean(&self) -> f64 {
        let (d, c) = self.shape();
        let g = match self.dimensionality {
            Dimensionality::Two => PI.sqrt() / 2.0,
            Dimensionality::Three => GAMMA_FOUR_THIRDS,
        };
        g * c.powf(-1.0 / d)
    }

    pub fn median(&self) -> f64 {
        let (d, c) = self.shape();
        (std::f64::consts::LN_2 / c).powf(1.0 / d)
    }
}

/// Gamma(4/3).
pub const GAMMA_FOUR_THIRDS: f64 = 0.892_979_511_569_249_2;

/// `sqrt(int_cutoff^inf dr 2 pi r s r^-6)` for a sheet of areal density `s`,
/// nm^-3. Without the cutoff the integral diverges at small r.
pub fn gamma_2d(sheet_density: f64, cutoff: f64) -> Result<f64> {
    if !(cutoff > 0.0) {
        return Err(invalid("the lower cutoff must be positive"));
    }
    Ok((PI * sheet_density / 2.0).sqrt() / (cutoff * cutoff))
}

/// `sqrt(int_cutoff^inf dr 4 pi r^2 rho r^-6)`, nm^-3.
pub fn gamma_3d(density: f64, cutoff: f64) -> Result<f64> {
    if !(cutoff > 0.0) {
        return Err(invalid("the lower cutoff must be positive"));
    }
    Ok((4.0 * PI * density / (3.0 * cutoff.powi(3))).sqrt())
}

/// `sqrt(rho int dV r^-6)` over a slab `|z| <= thickness/2` outside a
/// sphere of radius `cutoff`, nm^-3. Reduces to [`gamma_2d`] with
/// `s = rho t` when the cutoff exceeds the half thickness and to
/// [`gamma_3d`] for an infinitely thick slab.
pub fn gamma_slab(density: f64, thickness: f64, cutoff: f64) -> Result<f64> {
    if !(cutoff > 0.0 && thickness > 0.0) {
        return Err(invalid("the lower cutoff and thickness must be positive"));
    }
    let h = thickness / 2.0;
    // solid angle within the slab at radius r is 4 pi min(1, h / r)
    let integral = if cutoff >= h {
        PI * h / cutoff.powi(4)
    } else {
        4.0 * PI / 3.0 * (cutoff.powi(-3) - h.powi(-3)) + PI / h.powi(3)
    };
    Ok((density * integral).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64) -> f64, hi: f64, n: usize) -> f64 {
        // Simpson on [0, hi]
        let h = hi / n as f64;
        (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * f(k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn bulk_mean_matches_coefficient() {
        // 0.554 rho^(-1/3) to the quoted three digits
        let d = nn_pdf(Dimensionality::Three, 1.0).unwrap();
        assert!((d.mean() - 0.554).abs() < 5e-4);
        let d = nn_pdf(Dimensionality::Three, 8.0).unwrap();
        assert!((d.mean() - GAMMA_FOUR_THIRDS * (4.0 * PI * 8.0 / 3.0f64).powf(-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn gamma_four_thirds_value() {
        // Gamma(4/3) = Gamma(1/3) / 3 with Gamma(1/3) = 2.678938534707747...
        assert!((GAMMA_FOUR_THIRDS - 2.678_938_534_707_747_6 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sheet_median_halves_at_four_times_density() {
        let a = nn_pdf(Dimensionality::Two, 0.01).unwrap();
        let b = nn_pdf(Dimensionality::Two, 0.04).unwrap();
        assert!((b.median() - a.median() / 2.0).abs() < 1e-12);
        assert!((a.cdf(a.median()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn densities_normalized_and_means_consistent() {
        for d in [nn_pdf(Dimensionality::Two, 3e-3).unwrap(), nn_pdf(Dimensionality::Three, 5e-4).unwrap()] {
            let hi = 12.0 * d.mean();
            assert!((integrate(|r| d.pdf(r), hi, 200_000) - 1.0).abs() < 1e-6);
            let m = integrate(|r| r * d.pdf(r), hi, 200_000);
            assert!((m - d.mean()).abs() < 1e-6 * d.mean());
        }
    }

    #[test]
    fn gamma_integrals_match_quadrature() {
        let (s, rho, c) = (2e-3, 4e-4, 1.5);
        let i2 = integrate(|x| if x == 0.0 { 0.0 } else { let r = c / x; 2.0 * PI * r * s * r.powi(-6) * c / (x * x) }, 1.0, 100_000);
        assert!((i2.sqrt() - gamma_2d(s, c).unwrap()).abs() < 1e-6 * i2.sqrt());
        let i3 = integrate(|x| if x == 0.0 { 0.0 } else { let r = c / x; 4.0 * PI * r * r * rho * r.powi(-6) * c / (x * x) }, 1.0, 100_000);
        assert!((i3.sqrt() - gamma_3d(rho, c).unwrap()).abs() < 1e-6 * i3.sqrt());
        assert!(gamma_3d(rho, 0.0).is_err());
    }

    #[test]
    fn slab_gamma_limits() {
        let (rho, c) = (5e-4, 3.0);
        let thin = gamma_slab(rho, 0.5, c).unwrap();
        assert!((thin - gamma_2d(rho * 0.5, c).unwrap()).abs() < 1e-15);
        let thick = gamma_slab(rho, 1e7, c).unwrap();
        assert!((thick - gamma_3d(rho, c).unwrap()).abs() < 1e-9 * thick);
        // continuous where the cutoff meets the half thickness
        let a = gamma_slab(rho, 6.0 - 1e-9, c).unwrap();
        let b = gamma_slab(rho, 6.0 + 1e-9, c).unwrap();
        assert!((a - b).abs() < 1e-8 * a);
    }

    #[test]
    fn slab_gamma_matches_quadrature() {
        // direct quadrature over cylinder coordinates (s, z) outside the sphere
        let (rho, t, c) = (5e-4, 4.0, 1.2);
        let (nz, ns) = (400, 200_000);
        let smax = 400.0;
        let mut acc = 0.0;
        for iz in 0..nz {
            let z = -t / 2.0 + (iz as f64 + 0.5) * t / nz as f64;
            for is in 0..ns {
                let sr = (is as f64 + 0.5) * smax / ns as f64;
                let r2 = sr * sr + z * z;
                if r2 >= c * c {
                    acc += 2.0 * PI * sr * r2.powi(-3);
                }
            }
        }
        acc *= (t / nz as f64) * (smax / ns as f64);
        let g = gamma_slab(rho, t, c).unwrap();
        assert!(((rho * acc).sqrt() - g).abs() < 2e-3 * g);
    }
}
