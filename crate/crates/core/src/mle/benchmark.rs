//! Density error of the estimator against the number of measurements.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::library::CoherenceLibrary;
use super::likelihood::{estimate_density, likelihood_surface_on, refine_axis};
use crate::error::{invalid, Error, Result};
use crate::seeds;

/// Linecut points per library density interval.
pub const LINECUT_REFINEMENT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBenchmark {
    pub sample_counts: Vec<usize>,
    /// `sqrt(<eps^2>)` over trials and tested densities, per count.
    pub mean_error: Vec<f64>,
    /// Standard error of `<eps^2>` carried to the RMS, per count.
    pub error_std: Vec<f64>,
    /// Fit `A N^-p`.
    pub amplitude: f64,
    pub exponent: f64,
    /// RMS residual of the fit in `ln(error)`.
    pub fit_residual: f64,
    pub fixed_thickness: f64,
    pub tested_densities: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Trials whose linecut had no single normal peak; the linecut maximum
    /// was used instead.
    pub n_fallback: usize,
}

/// Densities tested: every grid density except one edge cell on each side.
pub fn tested_densities(library: &CoherenceLibrary) -> Vec<usize> {
    let n = library.densities.len();
    if n >= 3 { (1..n - 1).collect() } else { (0..n).collect() }
}

/// Draw `trials` datasets of N rates from each tested cell in the row
/// nearest `fixed_thickness`, estimate the density from each and fit the
/// error trend.
pub fn benchmark_error(
    library: &CoherenceLibrary,
    sample_counts: &[usize],
    trials: usize,
    fixed_thickness: f64,
    seed: u64,
) -> Result<ErrorBenchmark> {
    if sample_counts.is_empty() || sample_counts.contains(&0) || trials == 0 {
        return Err(invalid("sample counts and trials must be positive"));
    }
    if trials < 100 {
        log::warn!("{trials} trials per count; at least 100 are recommended");
    }
    let ti = library
        .thicknesses
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - fixed_thickness).abs().total_cmp(&(b.1 - fixed_thickness).abs()))
        .map(|(i, _)| i)
        .ok_or_else(|| invalid("empty library"))?;
    let t_row = library.thicknesses[ti];
    let fine = refine_axis(&library.densities, LINECUT_REFINEMENT);
    let tested = tested_densities(library);

    let mut mean_error = Vec::with_capacity(sample_counts.len());
    let mut error_std = Vec::with_capacity(sample_counts.len());
    let mut n_fallback = 0;
    for (ni, &n) in sample_counts.iter().enumerate() {
        let jobs: Vec<(usize, usize)> = tested.iter().flat_map(|&di| (0..trials).map(move |k| (di, k))).collect();
        let outcomes: Vec<Result<(f64, bool)>> = jobs
            .par_iter()
            .map(|&(di, k)| {
                let mut rng = seeds::rng(seed, &[seeds::tag::BENCH, ni as u64, di as u64, k as u64]);
                let pool = &library.cell(ti, di).rates;
                let data: Vec<f64> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
                let rho0 = library.densities[di];
                let surface = likelihood_surface_on(&data, library, &[t_row], &fine)?;
                let (rho, fallback) = match estimate_density(&surface, t_row) {
                    Ok(e) => (e.rho_mle, false),
                    Err(Error::Multimodal(_) | Error::UninformativeLikelihood) => (fine[surface.argmax.1], true),
                    Err(e) => return Err(e),
                };
                Ok((((rho - rho0) / rho0).powi(2), fallback))
            })
            .collect();
        let mut sq = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let (e2, fb) = o?;
            sq.push(e2);
            n_fallback += usize::from(fb);
        }
        let m = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (sq.len().max(2) - 1) as f64;
        let se = (var / sq.len() as f64).sqrt();
        let rms = m.sqrt();
        mean_error.push(rms);
        // d sqrt(m) = dm / (2 sqrt(m))
        error_std.push(if rms > 0.0 { se / (2.0 * rms) } else { 0.0 });
    }
    let (amplitude, exponent, fit_residual) = power_law_fit(sample_counts, &mean_error);
    Ok(ErrorBenchmark {
        sample_counts: sample_counts.to_vec(),
        mean_error,
        error_std,
        amplitude,
        exponent,
        fit_residual,
        fixed_thickness: t_row,
        tested_densities: tested.iter().map(|&d| library.densities[d]).collect(),
        trials,
        seed,
        n_fallback,
    })
}

/// Least squares of `ln e = ln A - p ln N`; returns (A, p, RMS residual).
/// Zero errors are left out; fewer than two usable points give NaN.
pub fn power_law_fit(counts: &[usize], errors: &[f64]) -> (f64, f64, f64) {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(&n, &e)| ((n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    (intercept.exp(), -slope, res)
}
