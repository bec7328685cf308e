//! Log-moments of coherence-time samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    /// `10^<log10(T / 1 ms)>`, ms
    pub mu: f64,
    /// Standard deviation of `log10(T / 1 ms)`.
    pub sigma: f64,
    pub n_samples: usize,
    /// Infinite samples left out of the moments.
    pub n_infinite: usize,
}

/// Mean and population standard deviation of `log10(T)` over the finite
/// samples (ms); infinite sentinels are counted, not used.
pub fn distribution_stats(samples: &[f64]) -> Result<DistributionStats> {
    let n_infinite = samples.iter().filter(|x| x.is_infinite() && **x > 0.0).count();
    let logs: Vec<f64> = samples.iter().filter(|x| x.is_finite() && **x > 0.0).map(|x| x.log10()).collect();
    if logs.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: logs.len() });
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(DistributionStats { mu: 10f64.powf(mean), sigma: var.max(0.0).sqrt(), n_samples: logs.len(), n_infinite })
}

/// Median of the finite samples.
pub fn median(samples: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples() {
        let s = distribution_stats(&[0.1, 0.1, 0.1]).unwrap();
        assert!((s.mu - 0.1).abs() < 1e-15);
        assert!(s.sigma.abs() < 1e-15);
    }

    #[test]
    fn log_symmetric_pair() {
        let s = distribution_stats(&[0.01, 1.0]).unwrap();
        assert!((s.mu - 0.1).abs() < 1e-15);
        assert!((s.sigma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_samples_are_counted() {
        let s = distribution_stats(&[0.01, 1.0, f64::INFINITY]).unwrap();
        assert_eq!(s.n_infinite, 1);
        assert_eq!(s.n_samples, 2);
        assert!(distribution_stats(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn permutation_and_scaling(mut v in proptest::collection::vec(1e-3..1e3f64, 2..40), k in 1e-3..1e3f64) {
            let a = distribution_stats(&v).unwrap();
            v.reverse();
            let b = distribution_stats(&v).unwrap();
            prop_assert!((a.mu - b.mu).abs() <= 1e-12 * a.mu);
            prop_assert!((a.sigma - b.sigma).abs() <= 1e-12);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let c = distribution_stats(&scaled).unwrap();
            prop_assert!((c.mu - k * a.mu).abs() <= 1e-9 * c.mu);
            prop_assert!((c.sigma - a.sigma).abs() <= 1e-9);
        }
    }
}
