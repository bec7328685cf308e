//! Coherence-time distributions over a (thickness, density) grid.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{distribution_stats, DistributionStats};
use crate::bath::{default_lateral_radius, BathGeometry, PlacementMode, T2STAR_CONVERGED_SPINS, T2_CONVERGED_SPINS};
use crate::cce::{simulate_observable, Observable, ObservableSample};
use crate::error::{Error, Result};
use crate::seeds;
use crate::spin_model::{FieldConfig, Isotope, ModelParams};

pub const SWEEP_SCHEMA: &str = "nvbath.sweep/1";
pub const SWEEP_TABLE_SCHEMA: &str = "nvbath.sweep-table/1";
/// Fraction of configurations that must succeed for a cell to count.
pub const QUORUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// nm, strictly increasing
    pub thicknesses: Vec<f64>,
    /// ppm, strictly increasing
    pub densities: Vec<f64>,
    pub n_configs: usize,
    pub observable: Observable,
    pub isotope: Isotope,
    pub placement: PlacementMode,
    pub field: FieldConfig,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("thickness", &self.thicknesses), ("density", &self.densities)] {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} axis must be positive and strictly increasing")));
            }
        }
        if self.n_configs == 0 {
            return Err(Error::InvalidParameter("n_configs must be at least 1".into()));
        }
        Ok(())
    }

    /// Geometry of one cell; the lateral radius holds about three times the
    /// spin count at which the observable converges.
    pub fn geometry(&self, thickness: f64, density: f64, params: &ModelParams) -> Result<BathGeometry> {
        let n_conv = match self.observable {
            Observable::RamseyT2Star => T2STAR_CONVERGED_SPINS,
            Observable::HahnT2(_) => T2_CONVERGED_SPINS,
        };
        let r = default_lateral_radius(density, thickness, n_conv, &params.constants)?;
        Ok(BathGeometry::new(density, thickness, r)?.with_isotope(self.isotope).with_placement(self.placement))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub thickness: f64,
    pub density: f64,
    pub lateral_radius: f64,
    pub cell_seed: u64,
    pub samples: Vec<ObservableSample>,
    pub n_failed: usize,
    pub complete: bool,
    pub stats: Option<DistributionStats>,
}

impl SweepCell {
    /// Successful values, ms (may include infinity).
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.value).collect()
    }

    pub fn finite_values(&self) -> Vec<f64> {
        self.values().into_iter().filter(|v| v.is_finite()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub schema: String,
    pub tool_version: String,
    pub spec: SweepSpec,
    /// Row-major: thickness outer, density inner.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, ti: usize, di: usize) -> Option<&SweepCell> {
        self.cells.get(ti * self.spec.densities.len() + di)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: SweepGrid = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if g.schema != SWEEP_SCHEMA {
            return Err(Error::Schema { expected: SWEEP_SCHEMA.into(), found: g.schema });
        }
        Ok(g)
    }

    /// Delimited stats table, one row per cell.
    pub fn stats_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool: {}", self.tool_version);
        let _ = writeln!(s, "# schema: {SWEEP_TABLE_SCHEMA}");
        let _ = writeln!(s, "# observable: {}", self.spec.observable.name());
        let _ = writeln!(s, "# seed: {}", self.spec.seed);
        let _ = writeln!(s, "thickness_nm,density_ppm,mu_ms,sigma,n,n_infinite,n_failed,complete");
        for c in &self.cells {
            let (mu, sigma, n, ninf) =
                c.stats.map_or((f64::NAN, f64::NAN, 0, 0), |st| (st.mu, st.sigma, st.n_samples, st.n_infinite));
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{},{},{},{}",
                c.thickness, c.density, mu, sigma, n, ninf, c.n_failed, c.complete
            );
        }
        s
    }
}

fn cell_seed(seed: u64, ti: usize, di: usize) -> u64 {
    seeds::derive(seed, &[seeds::tag::SWEEP, ti as u64, di as u64])
}

/// Populate every cell of the grid. With `checkpoint`, the partial grid is
/// written after each cell and a compatible file found there is resumed.
pub fn run_sweep(spec: &SweepSpec, params: &ModelParams, checkpoint: Option<&Path>) -> Result<SweepGrid> {
    spec.validate()?;
    let mut grid = SweepGrid {
        schema: SWEEP_SCHEMA.into(),
        tool_version: crate::TOOL_VERSION.into(),
        spec: spec.clone(),
        cells: Vec::new(),
    };
    if let Some(path) = checkpoint.filter(|p| p.exists()) {
        let previous = SweepGrid::load(path)?;
        if previous.spec == *spec {
            log::info!("resuming sweep with {} finished cells", previous.cells.len());
            grid.cells = previous.cells;
        } else {
            log::warn!("checkpoint at {} is for another sweep; starting over", path.display());
        }
    }
    let nd = spec.densities.len();
    for idx in grid.cells.len()..spec.thicknesses.len() * nd {
        let (ti, di) = (idx / nd, idx % nd);
        let (t, rho) = (spec.thicknesses[ti], spec.densities[di]);
        let geometry = spec.geometry(t, rho, params)?;
        let cs = cell_seed(spec.seed, ti, di);
        let samples = simulate_observable(&geometry, spec.n_configs, &spec.observable, params, spec.field, cs)?;
        let n_failed = samples.iter().filter(|s| s.value.is_none()).count();
        let complete = (spec.n_configs - n_failed) as f64 >= QUORUM * spec.n_configs as f64;
        let values: Vec<f64> = samples.iter().filter_map(|s| s.value).collect();
        let stats = distribution_stats(&values).ok();
        if !complete {
            log::warn!("cell ({t} nm, {rho} ppm) below quorum: {n_failed} of {} failed", spec.n_configs);
        }
        grid.cells.push(SweepCell {
            thickness: t,
            density: rho,
            lateral_radius: geometry.lateral_radius,
            cell_seed: cs,
            samples,
            n_failed,
            complete,
            stats,
        });
        if let Some(path) = checkpoint {
            grid.save(path)?;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> SweepSpec {
        SweepSpec {
            thicknesses: vec![2.0],
            densities: vec![5.0],
            n_configs: n,
            observable: Observable::RamseyT2Star,
            isotope: Isotope::N15,
            placement: PlacementMode::LatticeSite,
            field: FieldConfig::default(),
            seed: 11,
        }
    }

    #[test]
    fn one_cell_ten_configs() {
        let p = ModelParams::default_for(Isotope::N15);
        let g = run_sweep(&spec(10), &p, None).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells[0].samples.len(), 10);
        assert!(g.cells[0].complete);
        let st = g.cells[0].stats.unwrap();
        assert_eq!(st.n_samples + st.n_infinite, 10);
    }

    #[test]
    fn stats_recomputable_from_samples() {
        let p = ModelParams::default_for(Isotope::N15);
        let g = run_sweep(&spec(20), &p, None).unwrap();
        let c = &g.cells[0];
        assert_eq!(distribution_stats(&c.values()).ok(), c.stats);
    }

    #[test]
    fn checkpoint_resume_matches_fresh_run() {
        let p = ModelParams::default_for(Isotope::N15);
        let mut s = spec(5);
        s.thicknesses = vec![1.0, 3.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        let full = run_sweep(&s, &p, Some(&path)).unwrap();
        // keep only the first cell, then resume
        let mut partial = full.clone();
        partial.cells.truncate(1);
        partial.save(&path).unwrap();
        let resumed = run_sweep(&s, &p, Some(&path)).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(SweepGrid::load(&path).unwrap(), full);
    }

    #[test]
    fn rejects_unsorted_axes() {
        let mut s = spec(1);
        s.densities = vec![3.0, 2.0];
        assert!(s.validate().is_err());
    }
}
