//! Stretched-exponential and Gaussian fits of coherence decays.

use serde::{Deserialize, Serialize};

use crate::cce::{strong_factor, t2_star_from_a_bath, CoherenceCurve, StrongWeakPartition};
use crate::error::{Error, Result};

/// Bounds on the fitted exponent.
pub const EXPONENT_BOUNDS: (f64, f64) = (0.3, 6.0);
/// Relative parameter step below which the fit counts as converged.
pub const FIT_TOLERANCE: f64 = 1e-8;
/// Points after the decay drops below this magnitude are left out of the fit.
pub const FIT_FLOOR: f64 = 0.02;
/// A magnitude above `1 + DIVERGENCE_MARGIN` ends the fit window: the
/// expansion has left its range of validity there.
pub const DIVERGENCE_MARGIN: f64 = 1e-3;
const MIN_POINTS: usize = 10;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchedExpFit {
    /// ms
    pub t2: f64,
    pub n_exponent: f64,
    pub residual_norm: f64,
    pub converged: bool,
    /// Number of leading points used.
    pub n_points: usize,
}

impl StretchedExpFit {
    pub fn eval(&self, t: f64) -> f64 {
        (-(t / self.t2).powf(self.n_exponent)).exp()
    }
}

/// Leading stretch of `y` that is physically meaningful: stops before the
/// first divergent point and just after the decay falls below the floor.
pub fn fit_window(y: &[f64]) -> usize {
    for (i, &v) in y.iter().enumerate() {
        if !v.is_finite() || v > 1.0 + DIVERGENCE_MARGIN {
            return i;
        }
        if v < FIT_FLOOR {
            return i + 1;
        }
    }
    y.len()
}

/// First time at which `y` crosses 1/e, by linear interpolation.
pub fn first_crossing(t: &[f64], y: &[f64], level: f64) -> Option<f64> {
    (1..y.len()).find(|&i| y[i] <= level).map(|i| {
        let (t0, t1, y0, y1) = (t[i - 1], t[i], y[i - 1], y[i]);
        if y0 == y1 {
            t1
        } else {
            t0 + (y0 - level) * (t1 - t0) / (y0 - y1)
        }
    })
}

/// Least squares of `y` against `exp(-(t/T2)^n)`; `n` is held at
/// `fixed_n` when given. Levenberg-Marquardt in (ln T2, n).
pub fn fit_stretched(t: &[f64], y: &[f64], fixed_n: Option<f64>) -> Result<StretchedExpFit> {
    if t.len() != y.len() {
        return Err(Error::InvalidParameter("times and values differ in length".into()));
    }
    let end = fit_window(y);
    let (t, y) = (&t[..end], &y[..end]);
    if t.len() < MIN_POINTS {
        return Err(Error::InsufficientDecay);
    }
    let guess = first_crossing(t, y, (-1.0f64).exp()).ok_or(Error::InsufficientDecay)?;
    let (lo, hi) = EXPONENT_BOUNDS;
    let mut p = [guess.ln(), fixed_n.unwrap_or(1.0)];
    let n_par = if fixed_n.is_some() { 1 } else { 2 };

    let residuals = |p: &[f64; 2]| -> Vec<f64> {
        let tt = p[0].exp();
        t.iter().zip(y).map(|(&ti, &yi)| (-(ti / tt).powf(p[1])).exp() - yi).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        // J^T J and J^T r
        let tt = p[0].exp();
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (i, &ti) in t.iter().enumerate() {
            if ti <= 0.0 {
                continue;
            }
            let u = (ti / tt).powf(p[1]);
            let m = (-u).exp();
            let g = [m * p[1] * u, -m * u * (ti / tt).ln()];
            for a in 0..n_par {
                jtr[a] += g[a] * r[i];
                for b in 0..n_par {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let step = solve(&jtj, &jtr, lambda, n_par);
            let mut q = [p[0] - step[0], p[1] - step[1]];
            q[1] = q[1].clamp(lo, hi);
            let rq = residuals(&q);
            let cq = cost(&rq);
            if cq.is_finite() && cq <= c {
                let rel = ((q[0] - p[0]).abs() / p[0].abs().max(1.0)).max((q[1] - p[1]).abs() / p[1].abs());
                p = q;
                r = rq;
                c = cq;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < FIT_TOLERANCE {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: at a minimum to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }
    Ok(StretchedExpFit { t2: p[0].exp(), n_exponent: p[1], residual_norm: c.sqrt(), converged, n_points: t.len() })
}

fn solve(jtj: &[[f64; 2]; 2], jtr: &[f64; 2], lambda: f64, n_par: usize) -> [f64; 2] {
    let a = jtj[0][0] * (1.0 + lambda) + 1e-300;
    if n_par == 1 {
        return [jtr[0] / a, 0.0];
    }
    let d = jtj[1][1] * (1.0 + lambda) + 1e-300;
    let det = a * d - jtj[0][1] * jtj[1][0];
    [(d * jtr[0] - jtj[0][1] * jtr[1]) / det, (a * jtr[1] - jtj[1][0] * jtr[0]) / det]
}

/// Stretched-exponential fit of `|L(t)|`.
pub fn fit_stretched_exponential(curve: &CoherenceCurve) -> Result<StretchedExpFit> {
    fit_stretched(&curve.times, &curve.magnitudes(), None)
}

/// `|L|` with the strong-spin cosines divided out, as (times, values); points
/// where the strong factor nearly vanishes are dropped.
pub fn divide_strong(curve: &CoherenceCurve, partition: &StrongWeakPartition) -> (Vec<f64>, Vec<f64>) {
    curve
        .times
        .iter()
        .zip(curve.magnitudes())
        .filter_map(|(&t, m)| {
            let f = strong_factor(partition, t).abs();
            (f > 0.1).then_some((t, m / f))
        })
        .unzip()
}

/// Envelope through the local maxima of `y`, linearly interpolated.
pub fn envelope(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut e: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let left = i == 0 || y[i] >= y[i - 1];
            let right = i + 1 == n || y[i] >= y[i + 1];
            (left && right).then_some(y[i])
        })
        .collect();
    fill_gaps(t, &mut e)
}

fn fill_gaps(t: &[f64], y: &mut [Option<f64>]) -> Vec<f64> {
    let known: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    (0..y.len())
        .map(|i| {
            if let Some(v) = y[i] {
                return v;
            }
            let next = known.iter().position(|&k| k > i);
            match next {
                None => known.last().map_or(0.0, |&k| y[k].unwrap()),
                Some(0) => y[known[0]].unwrap(),
                Some(p) => {
                    let (a, b) = (known[p - 1], known[p]);
                    let (ya, yb) = (y[a].unwrap(), y[b].unwrap());
                    ya + (yb - ya) * (t[i] - t[a]) / (t[b] - t[a])
                }
            }
        })
        .collect()
}

/// T2* from the partition: `sqrt(2) / A_bath`, infinite for an empty weak set.
pub fn ramsey_t2star(partition: &StrongWeakPartition) -> f64 {
    t2_star_from_a_bath(partition.a_bath)
}

/// T2* from a Gaussian fit of a Ramsey curve. With a partition the strong
/// cosines are divided out; without one the local-maxima envelope is used.
pub fn ramsey_t2star_fit(curve: &CoherenceCurve, partition: Option<&StrongWeakPartition>) -> Result<f64> {
    if let Some(p) = partition {
        if p.weak.is_empty() {
            return Ok(f64::INFINITY);
        }
    }
    let (t, y) = match partition {
        Some(p) => divide_strong(curve, p),
        None => (curve.times.clone(), envelope(&curve.times, &curve.magnitudes())),
    };
    Ok(fit_stretched(&t, &y, Some(2.0))?.t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cce::partition_couplings;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn synthetic(t2: f64, n: f64, tmax: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..k).map(|i| tmax * i as f64 / (k - 1) as f64).collect();
        let y = t.iter().map(|&x| (-(x / t2).powf(n)).exp()).collect();
        (t, y)
    }

    #[test]
    fn recovers_generator() {
        let (t, y) = synthetic(0.1, 1.25, 0.5, 200);
        let f = fit_stretched(&t, &y, None).unwrap();
        assert!((f.t2 - 0.1).abs() < 5e-4 * 0.1, "{f:?}");
        assert!((f.n_exponent - 1.25).abs() < 5e-3 * 1.25);
        assert!(f.converged);
    }

    #[test]
    fn pure_gaussian() {
        let (t, y) = synthetic(2.0, 2.0, 6.0, 100);
        let f = fit_stretched(&t, &y, None).unwrap();
        assert!((f.n_exponent - 2.0).abs() < 0.02);
    }

    #[test]
    fn no_decay_is_an_error() {
        let (t, y) = synthetic(10.0, 1.0, 1.0, 50);
        assert!(matches!(fit_stretched(&t, &y, None), Err(Error::InsufficientDecay)));
    }

    #[test]
    fn window_stops_at_divergence() {
        let y = [1.0, 0.9, 0.5, 0.3, 2.0, 0.1];
        assert_eq!(fit_window(&y), 4);
        assert_eq!(fit_window(&[1.0, 0.5, 0.01, 0.5]), 3);
    }

    #[test]
    fn first_crossing_interpolates() {
        let c = first_crossing(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.0], 0.25).unwrap();
        assert!((c - 1.5).abs() < 1e-15);
    }

    #[test]
    fn envelope_through_peaks() {
        let t: Vec<f64> = (0..5).map(f64::from).collect();
        let e = envelope(&t, &[1.0, 0.2, 0.8, 0.1, 0.6]);
        assert_eq!(e, vec![1.0, 0.9, 0.8, 0.7, 0.6]);
    }

    #[test]
    fn gaussian_route_matches_formula_with_strong_spin() {
        let mut a: Vec<f64> = (0..30).map(|k| 1.0 + 0.05 * k as f64).collect();
        a.push(80.0);
        let p = partition_couplings(&a);
        assert_eq!(p.strong.len(), 1);
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 5.0 * p.t2_star / 399.0).collect();
        let curve = crate::cce::ramsey_cce1_analytic(&p, &times);
        let fit = ramsey_t2star_fit(&curve, Some(&p)).unwrap();
        assert!((fit - ramsey_t2star(&p)).abs() < 1e-6 * fit);
    }

    #[test]
    fn empty_weak_set_is_infinite() {
        let p = partition_couplings(&[5.0]);
        assert!(ramsey_t2star(&p).is_infinite());
        let c = CoherenceCurve::new(vec![0.0, 1.0], vec![Complex64::new(1.0, 0.0); 2]);
        assert!(ramsey_t2star_fit(&c, Some(&p)).unwrap().is_infinite());
    }

    proptest! {
        #[test]
        fn refit_is_idempotent(t2 in 0.01..10.0f64, n in 0.6..4.0f64) {
            let (t, y) = synthetic(t2, n, 4.0 * t2, 80);
            let f = fit_stretched(&t, &y, None).unwrap();
            let y2: Vec<f64> = t.iter().map(|&x| f.eval(x)).collect();
            let g = fit_stretched(&t, &y2, None).unwrap();
            prop_assert!((g.t2 - f.t2).abs() <= 1e-10 * f.t2);
            prop_assert!((g.n_exponent - f.n_exponent).abs() <= 1e-10 * f.n_exponent);
        }
    }
}
