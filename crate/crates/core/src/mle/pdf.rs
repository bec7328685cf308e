//! Histogram densities of decoherence rates.
//!
//! Rates span decades across a library, so the histogram lives on
//! `u = log10(rate)`; evaluating at a rate applies the Jacobian
//! `1 / (rate ln 10)`.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MIN_BINS: usize = 20;
pub const MAX_BINS: usize = 200;
/// Below this many samples a cell is flagged in provenance.
pub const RECOMMENDED_SAMPLES: usize = 50;

/// Bin edges in `log10(rate / 1 ms^-1)`, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub edges: Vec<f64>,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 || self.edges.windows(2).any(|w| !(w[1] > w[0])) || self.edges.iter().any(|e| !e.is_finite())
        {
            return Err(invalid("histogram edges must be finite and strictly increasing"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }
}

fn log_rates(rates: &[f64]) -> Result<Vec<f64>> {
    if rates.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    rates
        .iter()
        .map(|&r| if r.is_finite() && r > 0.0 { Ok(r.log10()) } else { Err(invalid(format!("rate {r} is not finite and positive"))) })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let x = q * (sorted.len() - 1) as f64;
    let i = x.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (x - i as f64) * (sorted[j] - sorted[i])
}

/// Freedman-Diaconis bins over the sample range, clamped to
/// [`MIN_BINS`, `MAX_BINS`]. Identical samples give one narrow bin.
pub fn histogram_spec(rates: &[f64]) -> Result<HistogramSpec> {
    let mut u = log_rates(rates)?;
    u.sort_by(f64::total_cmp);
    let (lo, hi) = (u[0], u[u.len() - 1]);
    let span = hi - lo;
    if span <= 1e-9 * lo.abs().max(1.0) {
        let half = 1e-6 * lo.abs().max(1.0);
        return Ok(HistogramSpec { edges: vec![lo - half, lo + half] });
    }
    let iqr = quantile(&u, 0.75) - quantile(&u, 0.25);
    let width = 2.0 * iqr * (u.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 { (span / width).ceil() as usize } else { MAX_BINS };
    let bins = bins.clamp(MIN_BINS, MAX_BINS);
    let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + span * k as f64 / bins as f64 }).collect();
    Ok(HistogramSpec { edges })
}

/// Normalized histogram on `log10(rate)` with linear interpolation between
/// bin centres (flat over the outer half bins, which keeps the integral at
/// exactly one) and a probability floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePdf {
    pub spec: HistogramSpec,
    /// Per-bin density in log10 units.
    pub heights: Vec<f64>,
    /// `1 / (10 n w)` with `w` the support width in log10 units.
    pub floor: f64,
    pub n_samples: usize,
}

pub fn build_pdf(rates: &[f64], spec: &HistogramSpec) -> Result<RatePdf> {
    spec.validate()?;
    let u = log_rates(rates)?;
    let edges = &spec.edges;
    let nb = spec.n_bins();
    let mut counts = vec![0usize; nb];
    let (lo, hi) = (edges[0], edges[nb]);
    let mut inside = 0usize;
    for &x in &u {
        if x < lo || x > hi {
            continue;
        }
        // last bin is closed on the right
        let k = edges.partition_point(|e| *e <= x).saturating_sub(1).min(nb - 1);
        counts[k] += 1;
        inside += 1;
    }
    if inside == 0 {
        return Err(invalid("no samples inside the histogram support"));
    }
    let heights = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (inside as f64 * (w[1] - w[0])))
        .collect();
    let floor = 1.0 / (10.0 * u.len() as f64 * (hi - lo));
    Ok(RatePdf { spec: spec.clone(), heights, floor, n_samples: u.len() })
}

impl RatePdf {
    /// Unfloored density in log10 units.
    pub fn raw_log_density(&self, u: f64) -> f64 {
        let e = &self.spec.edges;
        let nb = self.heights.len();
        if !(u >= e[0] && u <= e[nb]) {
            return 0.0;
        }
        let centre = |k: usize| 0.5 * (e[k] + e[k + 1]);
        if u <= centre(0) {
            return self.heights[0];
        }
        if u >= centre(nb - 1) {
            return self.heights[nb - 1];
        }
        let k = (0..nb - 1).find(|&k| u <= centre(k + 1)).unwrap_or(nb - 2);
        let (c0, c1) = (centre(k), centre(k + 1));
        let f = (u - c0) / (c1 - c0);
        self.heights[k] * (1.0 - f) + self.heights[k + 1] * f
    }

    /// Floored density in log10 units.
    pub fn log_density(&self, u: f64) -> f64 {
        self.raw_log_density(u).max(self.floor)
    }

    /// Floored density in rate units, ms.
    pub fn eval(&self, rate: f64) -> f64 {
        if !(rate > 0.0 && rate.is_finite()) {
            return 0.0;
        }
        self.log_density(rate.log10()) / (rate * LN_10)
    }

    /// Whether the unfloored density at `rate` is below the floor.
    pub fn is_floored(&self, rate: f64) -> bool {
        !(rate > 0.0) || self.raw_log_density(rate.log10()) < self.floor
    }

    /// Rate support, ms^-1.
    pub fn support(&self) -> (f64, f64) {
        let e = &self.spec.edges;
        (10f64.powf(e[0]), 10f64.powf(e[e.len() - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Cauchy, Distribution, Normal};

    fn integral(p: &RatePdf, n: usize) -> f64 {
        let e = &p.spec.edges;
        let (lo, hi) = (e[0], e[e.len() - 1]);
        let h = (hi - lo) / n as f64;
        // trapezoid in u on a grid much finer than the bins
        (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * p.raw_log_density(lo + k as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn spike_for_identical_samples() {
        let rates = vec![7.0; 30];
        let spec = histogram_spec(&rates).unwrap();
        assert_eq!(spec.n_bins(), 1);
        let p = build_pdf(&rates, &spec).unwrap();
        let at = p.eval(7.0);
        assert!(at > p.eval(7.0 * (1.0 + 1e-9)) * 0.999);
        assert!(at > 1e3);
        assert_eq!(p.log_density(3.0), p.floor);
        assert!(p.is_floored(3.0));
    }

    #[test]
    fn bin_count_clamped() {
        let few: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(histogram_spec(&few).unwrap().n_bins(), MIN_BINS);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        // heavy tails stretch the range far beyond the interquartile width
        let d = Cauchy::new(0.0, 0.5).unwrap();
        let many: Vec<f64> = (0..20_000).map(|_| 10f64.powf(Distribution::<f64>::sample(&d, &mut rng).clamp(-200.0, 200.0))).collect();
        assert_eq!(histogram_spec(&many).unwrap().n_bins(), MAX_BINS);
    }

    #[test]
    fn integrates_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let d = Normal::new(10.0, 2.0).unwrap();
        let rates: Vec<f64> = (0..700).map(|_| d.sample(&mut rng)).filter(|x: &f64| *x > 0.0).collect();
        let p = build_pdf(&rates, &histogram_spec(&rates).unwrap()).unwrap();
        assert!((integral(&p, 400_000) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normal_samples_rebuild_with_small_ks() {
        // KS distance between the rebuilt density and the generating normal
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (m, s) = (10.0, 1.0);
        let d = Normal::new(m, s).unwrap();
        let rates: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
        let p = build_pdf(&rates, &histogram_spec(&rates).unwrap()).unwrap();
        let (lo, hi) = p.support();
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut cdf = 0.0;
        let mut ks = 0.0f64;
        let mut prev = p.raw_log_density(lo.log10()) / (lo * LN_10);
        let phi = |x: f64| 0.5 * (1.0 + erf((x - m) / (s * 2f64.sqrt())));
        for k in 1..=n {
            let r = lo + k as f64 * h;
            let cur = p.raw_log_density(r.log10()) / (r * LN_10);
            cdf += 0.5 * (prev + cur) * h;
            prev = cur;
            ks = ks.max((cdf - phi(r)).abs());
        }
        assert!(ks < 0.05, "ks {ks}");
    }

    // Abramowitz-Stegun 7.1.26, absolute error below 1.5e-7
    fn erf(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.3275911 * x.abs());
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592)
                * t
                * (-x * x).exp();
        y.copysign(x)
    }

    #[test]
    fn rejects_bad_input() {
        assert!(histogram_spec(&[]).is_err());
        assert!(histogram_spec(&[1.0, -1.0]).is_err());
        assert!(build_pdf(&[1.0], &HistogramSpec { edges: vec![1.0, 0.0] }).is_err());
    }
}
