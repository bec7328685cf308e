//! Fraction of configurations with a strongly coupled bath spin versus
//! slab thickness, from thick master baths sliced to each thickness.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::visibility::{lateral_radius_for, visibility_from};
use crate::bath::{generate_bath, mean_nn_distance_formula, slice_bath, BathGeometry, PlacementMode};
use crate::cce::{bath_couplings, partition_couplings};
use crate::error::{invalid, Error, Result};
use crate::seeds;
use crate::spin_model::ModelParams;

pub const YIELD_SCHEMA: &str = "nvbath.yield/1";
pub const MASTER_THICKNESS: f64 = 50.0;
/// Log10 edges of the stored visibility histograms.
pub const NU_HIST_RANGE: (f64, f64) = (-2.0, 4.0);
pub const NU_HIST_BINS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCell {
    pub density: f64,
    pub thickness: f64,
    /// Non-empty greedy strong set.
    pub yield_greedy: f64,
    pub stderr_greedy: f64,
    /// `nu >= 2 pi` for the nearest spin.
    pub yield_nu: f64,
    pub stderr_nu: f64,
    pub median_nu: Option<f64>,
    /// Configurations with fewer than two spins in the slice.
    pub n_sparse: usize,
    /// Counts of `log10(nu)` over [`NU_HIST_RANGE`]; out-of-range values
    /// go to the end bins.
    pub nu_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCrossover {
    pub density: f64,
    /// Mean nearest-neighbour distance, nm; `None` at zero density.
    pub r_nn: Option<f64>,
    pub thin_yield: f64,
    pub thick_yield: f64,
    /// Thin over thick yield; `None` when the thick yield is zero.
    pub ratio: Option<f64>,
    /// Midpoint of a logistic in ln(thickness), nm; `None` when the fit fails.
    pub knee: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub schema: String,
    pub tool_version: String,
    pub densities: Vec<f64>,
    pub thicknesses: Vec<f64>,
    pub master_thickness: f64,
    pub n_configs: usize,
    pub seed: u64,
    pub lateral_radii: Vec<f64>,
    /// Row-major, density outer.
    pub cells: Vec<YieldCell>,
    pub crossovers: Vec<YieldCrossover>,
    pub n_failed: usize,
    pub warnings: Vec<String>,
}

impl YieldReport {
    pub fn cell(&self, di: usize, ti: usize) -> &YieldCell {
        &self.cells[di * self.thicknesses.len() + ti]
    }

    /// Delimited table, one row per cell.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool: {}", self.tool_version);
        let _ = writeln!(s, "# schema: {YIELD_SCHEMA}");
        let _ = writeln!(s, "# configs: {} seed: {} master: {} nm", self.n_configs, self.seed, self.master_thickness);
        let _ = writeln!(s, "density_ppm,thickness_nm,yield,yield_stderr,yield_nu,yield_nu_stderr,mean_rnn_nm");
        for (di, &rho) in self.densities.iter().enumerate() {
            let rnn = self.crossovers[di].r_nn.unwrap_or(f64::INFINITY);
            for ti in 0..self.thicknesses.len() {
                let c = self.cell(di, ti);
                let _ = writeln!(
                    s,
                    "{},{},{:e},{:e},{:e},{:e},{:e}",
                    rho, c.thickness, c.yield_greedy, c.stderr_greedy, c.yield_nu, c.stderr_nu, rnn
                );
            }
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: YieldReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.schema != YIELD_SCHEMA {
            return Err(Error::Schema { expected: YIELD_SCHEMA.into(), found: r.schema });
        }
        Ok(r)
    }
}

/// Per-slice outcome of one master bath.
#[derive(Clone, Copy)]
struct SliceOutcome {
    greedy: bool,
    nu: Option<f64>,
}

fn nu_bin(nu: f64) -> usize {
    let (lo, hi) = NU_HIST_RANGE;
    let x = (nu.log10() - lo) / (hi - lo) * NU_HIST_BINS as f64;
    if x.is_nan() { 0 } else { (x.max(0.0) as usize).min(NU_HIST_BINS - 1) }
}

/// Generate `n_configs` master slabs per density, slice each to every
/// thickness, and count configurations with a strongly coupled spin by
/// both criteria.
pub fn yield_sweep(
    densities: &[f64],
    thicknesses: &[f64],
    n_configs: usize,
    seed: u64,
    params: &ModelParams,
) -> Result<YieldReport> {
    yield_sweep_with(densities, thicknesses, n_configs, seed, params, MASTER_THICKNESS)
}

pub fn yield_sweep_with(
    densities: &[f64],
    thicknesses: &[f64],
    n_configs: usize,
    seed: u64,
    params: &ModelParams,
    master_thickness: f64,
) -> Result<YieldReport> {
    if n_configs == 0 {
        return Err(invalid("n_configs must be at least 1"));
    }
    if thicknesses.is_empty() || thicknesses.windows(2).any(|w| !(w[1] > w[0])) || !(thicknesses[0] > 0.0) {
        return Err(invalid("thicknesses must be positive and strictly increasing"));
    }
    if thicknesses[thicknesses.len() - 1] > master_thickness {
        return Err(invalid(format!("thicknesses must not exceed the master slab ({master_thickness} nm)")));
    }
    if densities.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(invalid("densities must be non-negative"));
    }
    let nt = thicknesses.len();
    let mut cells = Vec::with_capacity(densities.len() * nt);
    let mut crossovers = Vec::with_capacity(densities.len());
    let mut lateral_radii = Vec::with_capacity(densities.len());
    let mut warnings = Vec::new();
    let mut n_failed = 0;
    for (di, &rho) in densities.iter().enumerate() {
        if rho == 0.0 {
            warnings.push("zero density: no bath spins, yield set to 0".into());
            lateral_radii.push(0.0);
            for &t in thicknesses {
                cells.push(YieldCell {
                    density: rho,
                    thickness: t,
                    yield_greedy: 0.0,
                    stderr_greedy: 0.0,
                    yield_nu: 0.0,
                    stderr_nu: 0.0,
                    median_nu: None,
                    n_sparse: n_configs,
                    nu_histogram: vec![0; NU_HIST_BINS],
                });
            }
            crossovers.push(YieldCrossover {
                density: rho,
                r_nn: None,
                thin_yield: 0.0,
                thick_yield: 0.0,
                ratio: None,
                knee: None,
            });
            continue;
        }
        let radius = lateral_radius_for(rho, thicknesses[0], params)?;
        lateral_radii.push(radius);
        let geometry = BathGeometry::new(rho, master_thickness, radius)?
            .with_isotope(params.p1.isotope)
            .with_placement(PlacementMode::LatticeSite);
        let per_config: Vec<Result<Vec<SliceOutcome>>> = (0..n_configs)
            .into_par_iter()
            .map(|k| {
                let cs = seeds::derive(seed, &[seeds::tag::YIELD, di as u64, k as u64]);
                let master = generate_bath(&geometry, cs, &params.constants)?;
                thicknesses
                    .iter()
                    .map(|&t| {
                        let slab = if t < master_thickness { slice_bath(&master, t)? } else { master.clone() };
                        let a = bath_couplings(&slab, &params.central, &params.constants)?;
                        let greedy = !partition_couplings(&a).strong.is_empty();
                        let dist: Vec<f64> =
                            slab.spins.iter().map(|s| (s.position - slab.central_position).norm()).collect();
                        let nu = match visibility_from(&a, &dist) {
                            Ok(v) => Some(v.nu),
                            Err(Error::VisibilityUndefined(_)) if a.len() == 1 => Some(f64::INFINITY),
                            Err(Error::VisibilityUndefined(_)) => None,
                            Err(e) => return Err(e),
                        };
                        Ok(SliceOutcome { greedy, nu })
                    })
                    .collect()
            })
            .collect();
        let ok: Vec<Vec<SliceOutcome>> = per_config
            .into_iter()
            .filter_map(|r| match r {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("yield configuration failed: {e}");
                    n_failed += 1;
                    None
                }
            })
            .collect();
        let n = ok.len() as f64;
        if ok.is_empty() {
            return Err(invalid(format!("every configuration failed at {rho} ppm")));
        }
        let mut row = Vec::with_capacity(nt);
        for (ti, &t) in thicknesses.iter().enumerate() {
            let g = ok.iter().filter(|o| o[ti].greedy).count() as f64 / n;
            let y = ok.iter().filter(|o| o[ti].nu.is_some_and(|nu| nu >= TAU)).count() as f64 / n;
            let mut nus: Vec<f64> = ok.iter().filter_map(|o| o[ti].nu).collect();
            nus.sort_by(f64::total_cmp);
            let mut hist = vec![0; NU_HIST_BINS];
            for &nu in &nus {
                hist[nu_bin(nu)] += 1;
            }
            let median_nu = (!nus.is_empty()).then(|| nus[nus.len() / 2]);
            row.push(YieldCell {
                density: rho,
                thickness: t,
                yield_greedy: g,
                stderr_greedy: (g * (1.0 - g) / n).sqrt(),
                yield_nu: y,
                stderr_nu: (y * (1.0 - y) / n).sqrt(),
                median_nu,
                n_sparse: ok.len() - nus.iter().filter(|v| v.is_finite()).count(),
                nu_histogram: hist,
            });
        }
        let ys: Vec<f64> = row.iter().map(|c| c.yield_greedy).collect();
        let (thin, thick) = (ys[0], ys[nt - 1]);
        crossovers.push(YieldCrossover {
            density: rho,
            r_nn: Some(mean_nn_distance_formula(rho, &params.constants)?),
            thin_yield: thin,
            thick_yield: thick,
            ratio: (thick > 0.0).then(|| thin / thick),
            knee: logistic_knee(thicknesses, &ys),
        });
        cells.extend(row);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(YieldReport {
        schema: YIELD_SCHEMA.into(),
        tool_version: crate::TOOL_VERSION.into(),
        densities: densities.to_vec(),
        thicknesses: thicknesses.to_vec(),
        master_thickness,
        n_configs,
        seed,
        lateral_radii,
        cells,
        crossovers,
        n_failed,
        warnings,
    })
}

/// Fit `y = lo + (hi - lo) / (1 + exp(k (ln t - ln t_c)))` and return
/// `t_c`, nm. The start is the midpoint crossing of the end values.
pub fn logistic_knee(thicknesses: &[f64], yields: &[f64]) -> Option<f64> {
    let n = thicknesses.len();
    if n < 5 {
        return None;
    }
    let x: Vec<f64> = thicknesses.iter().map(|t| t.ln()).collect();
    let (hi, lo) = (yields[0], yields[n - 1]);
    let mid = 0.5 * (hi + lo);
    let x0 = (1..n).find(|&i| yields[i] <= mid).map(|i| {
        let (a, b) = (yields[i - 1], yields[i]);
        if a == b { x[i] } else { x[i - 1] + (a - mid) / (a - b) * (x[i] - x[i - 1]) }
    })?;
    let model = |p: &DVector<f64>, xi: f64| p[1] + (p[0] - p[1]) / (1.0 + (p[3] * (xi - p[2])).exp());
    let cost = |p: &DVector<f64>| x.iter().zip(yields).map(|(&xi, &yi)| (model(p, xi) - yi).powi(2)).sum::<f64>();
    let mut p = DVector::from_vec(vec![hi, lo, x0, 2.0]);
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut j = DMatrix::zeros(n, 4);
        let mut r = DVector::zeros(n);
        for (i, &xi) in x.iter().enumerate() {
            let e = (p[3] * (xi - p[2])).exp();
            let s = 1.0 / (1.0 + e);
            j[(i, 0)] = s;
            j[(i, 1)] = 1.0 - s;
            // d s / d x0 = k e s^2 ; d s / d k = -(x - x0) e s^2
            j[(i, 2)] = (p[0] - p[1]) * p[3] * e * s * s;
            j[(i, 3)] = -(p[0] - p[1]) * (xi - p[2]) * e * s * s;
            r[i] = model(&p, xi) - yields[i];
        }
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * r;
        let mut moved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..4 {
                a[(k, k)] = a[(k, k)] * (1.0 + lambda) + 1e-15;
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let ct = cost(&trial);
            if ct.is_finite() && ct < c {
                moved = step.norm() > 1e-12 * (p.norm() + 1e-12);
                p = trial;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if !moved {
            break;
        }
    }
    let knee = p[2].exp();
    (knee.is_finite() && p[3] > 0.0 && knee >= thicknesses[0] && knee <= thicknesses[n - 1]).then_some(knee)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::Isotope;

    #[test]
    fn knee_of_exact_logistic() {
        let t: Vec<f64> = (0..20).map(|k| 0.5 * 1.3f64.powi(k)).collect();
        let y: Vec<f64> = t.iter().map(|ti| 0.1 + 0.2 / (1.0 + (1.7 * (ti.ln() - 7f64.ln())).exp())).collect();
        let k = logistic_knee(&t, &y).unwrap();
        assert!((k - 7.0).abs() < 1e-6, "{k}");
    }

    #[test]
    fn yields_bounded_and_thin_favoured() {
        let p = ModelParams::default_for(Isotope::N15);
        let r = yield_sweep(&[3.0], &[0.5, 2.0, 8.0, 50.0], 300, 2, &p).unwrap();
        for c in &r.cells {
            assert!((0.0..=1.0).contains(&c.yield_greedy) && (0.0..=1.0).contains(&c.yield_nu));
            assert!(c.nu_histogram.iter().sum::<usize>() <= 300);
        }
        assert!(r.cell(0, 0).yield_greedy > r.cell(0, 3).yield_greedy);
        assert!(r.cell(0, 0).median_nu > r.cell(0, 3).median_nu);
        assert_eq!(r.n_failed, 0);
        let text = r.table();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }

    #[test]
    fn zero_density_gives_zero_yield() {
        let p = ModelParams::default_for(Isotope::N15);
        let r = yield_sweep(&[0.0], &[1.0, 10.0], 5, 2, &p).unwrap();
        assert!(r.cells.iter().all(|c| c.yield_greedy == 0.0));
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn rejects_slices_thicker_than_master() {
        let p = ModelParams::default_for(Isotope::N15);
        assert!(yield_sweep(&[3.0], &[1.0, 60.0], 5, 2, &p).is_err());
    }
}
