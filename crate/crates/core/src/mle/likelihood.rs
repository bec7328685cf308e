//! Joint log-likelihood of measured rates over the library grid and the
//! density estimate from its linecut at fixed thickness.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::library::CoherenceLibrary;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSurface {
    pub thicknesses: Vec<f64>,
    pub densities: Vec<f64>,
    /// Row-major, thickness outer. Floored densities keep every value finite.
    pub log_likelihood: Vec<f64>,
    /// (thickness index, density index)
    pub argmax: (usize, usize),
    /// True when the maximum has been subtracted.
    pub normalized: bool,
    pub n_measurements: usize,
    /// (cell, measurement) pairs that hit the probability floor.
    pub n_floored: usize,
}

impl LikelihoodSurface {
    pub fn value(&self, ti: usize, di: usize) -> f64 {
        self.log_likelihood[ti * self.densities.len() + di]
    }

    pub fn max(&self) -> f64 {
        self.value(self.argmax.0, self.argmax.1)
    }

    pub fn normalized(&self) -> Self {
        let m = self.max();
        LikelihoodSurface {
            log_likelihood: self.log_likelihood.iter().map(|v| v - m).collect(),
            normalized: true,
            ..self.clone()
        }
    }

    pub fn row(&self, ti: usize) -> &[f64] {
        let nd = self.densities.len();
        &self.log_likelihood[ti * nd..(ti + 1) * nd]
    }
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return Err(invalid("at least one measurement is required"));
    }
    if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(invalid(format!("measured rate {r} is not finite and positive")));
    }
    Ok(())
}

/// `sum_i log P(rate_i | t, rho)` on the library grid.
pub fn likelihood_surface(rates: &[f64], library: &CoherenceLibrary) -> Result<LikelihoodSurface> {
    likelihood_surface_on(rates, library, &library.thicknesses, &library.densities)
}

/// As [`likelihood_surface`] on arbitrary axes inside the library range,
/// with densities interpolated bilinearly between cells.
pub fn likelihood_surface_on(
    rates: &[f64],
    library: &CoherenceLibrary,
    thicknesses: &[f64],
    densities: &[f64],
) -> Result<LikelihoodSurface> {
    check_rates(rates)?;
    if thicknesses.is_empty() || densities.is_empty() {
        return Err(invalid("surface axes must not be empty"));
    }
    let mut values = Vec::with_capacity(thicknesses.len() * densities.len());
    let mut n_floored = 0;
    for &t in thicknesses {
        for &d in densities {
            let mut ll = 0.0;
            for &r in rates {
                if library.is_floored(r, t, d) {
                    n_floored += 1;
                }
                ll += library.eval(r, t, d).ln();
            }
            values.push(ll);
        }
    }
    if n_floored == values.len() * rates.len() {
        return Err(Error::OutsideSupport);
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v > values[b] { k } else { b });
    Ok(LikelihoodSurface {
        thicknesses: thicknesses.to_vec(),
        densities: densities.to_vec(),
        log_likelihood: values,
        argmax: (best / densities.len(), best % densities.len()),
        normalized: false,
        n_measurements: rates.len(),
        n_floored,
    })
}

/// `per_interval` points between neighbouring values of `axis`.
pub fn refine_axis(axis: &[f64], per_interval: usize) -> Vec<f64> {
    let k = per_interval.max(1);
    let mut out: Vec<f64> = axis
        .windows(2)
        .flat_map(|w| (0..k).map(move |j| w[0] + (w[1] - w[0]) * j as f64 / k as f64))
        .collect();
    out.extend(axis.last());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// ppm
    pub rho_mle: f64,
    /// ppm, width of the normal fitted to the linecut
    pub rho_sigma: f64,
    /// Grid row used, nm.
    pub fixed_thickness: f64,
    pub requested_thickness: f64,
    /// Residual norm of the normal fit over the norm of the linecut.
    pub fit_residual: f64,
    pub linecut_densities: Vec<f64>,
    /// `exp(log L - max)` along the row.
    pub linecut: Vec<f64>,
}

/// Linecuts worse than this relative residual with two separated peaks are
/// reported as multimodal.
pub const MULTIMODAL_RESIDUAL: f64 = 0.1;

/// Fit a normal to the exponentiated linecut at the row nearest
/// `fixed_thickness`.
pub fn estimate_density(surface: &LikelihoodSurface, fixed_thickness: f64) -> Result<DensityEstimate> {
    let ti = surface
        .thicknesses
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - fixed_thickness).abs().total_cmp(&(b.1 - fixed_thickness).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| invalid("empty surface"))?;
    let row = surface.row(ti);
    let x = &surface.densities;
    if x.len() < 3 {
        return Err(invalid("a density linecut needs at least three points"));
    }
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    if !(hi - lo > 1e-12) {
        return Err(Error::UninformativeLikelihood);
    }
    let y: Vec<f64> = row.iter().map(|v| (v - hi).exp()).collect();
    let min_step = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (mu, sigma, residual) = fit_normal(x, &y, 0.25 * min_step);
    if residual > MULTIMODAL_RESIDUAL && separated_peaks(&y) {
        return Err(Error::Multimodal(residual));
    }
    Ok(DensityEstimate {
        rho_mle: mu.clamp(x[0], x[x.len() - 1]),
        rho_sigma: sigma,
        fixed_thickness: surface.thicknesses[ti],
        requested_thickness: fixed_thickness,
        fit_residual: residual,
        linecut_densities: x.clone(),
        linecut: y,
    })
}

/// Two local maxima above 0.2 with a dip below half the lower one between.
fn separated_peaks(y: &[f64]) -> bool {
    let n = y.len();
    let peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            y[i] > 0.2 && (i == 0 || y[i] >= y[i - 1]) && (i + 1 == n || y[i] > y[i + 1])
        })
        .collect();
    peaks.windows(2).any(|p| {
        let dip = y[p[0]..=p[1]].iter().copied().fold(f64::INFINITY, f64::min);
        dip < 0.5 * y[p[0]].min(y[p[1]])
    })
}

/// Levenberg-Marquardt fit of `a exp(-(x - mu)^2 / (2 s^2))`; returns
/// (mu, s, relative residual). `s` is kept above `s_min`.
fn fit_normal(x: &[f64], y: &[f64], s_min: f64) -> (f64, f64, f64) {
    let sw: f64 = y.iter().sum();
    let mu0 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let var0 = x.iter().zip(y).map(|(a, b)| (a - mu0).powi(2) * b).sum::<f64>() / sw;
    let peak = y.iter().enumerate().fold(0, |b, (k, v)| if *v > y[b] { k } else { b });
    // parameters (a, mu, ln s)
    let mut p = Vector3::new(1.0, x[peak], var0.sqrt().max(s_min).ln());
    let model = |p: &Vector3<f64>, xi: f64| {
        let s = p[2].exp().max(s_min);
        p[0] * (-(xi - p[1]).powi(2) / (2.0 * s * s)).exp()
    };
    let cost = |p: &Vector3<f64>| x.iter().zip(y).map(|(&xi, &yi)| (model(p, xi) - yi).powi(2)).sum::<f64>();
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let s = p[2].exp().max(s_min);
            let g = (-(xi - p[1]).powi(2) / (2.0 * s * s)).exp();
            let m = p[0] * g;
            let j = Vector3::new(g, m * (xi - p[1]) / (s * s), m * (xi - p[1]).powi(2) / (s * s));
            jtj += j * j.transpose();
            jtr += j * (m - yi);
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] *= 1.0 + lambda;
                a[(k, k)] += 1e-15;
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let ct = cost(&trial);
            if ct.is_finite() && ct < c {
                let rel = step.norm() / (p.norm() + 1e-12);
                p = trial;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    (p[1], p[2].exp().max(s_min), c.sqrt() / norm)
}
