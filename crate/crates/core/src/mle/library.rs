//! Simulated 1/T2* samples over a (thickness, density) grid, with the
//! per-cell histogram bins used to turn them into densities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pdf::{build_pdf, histogram_spec, HistogramSpec, RatePdf, RECOMMENDED_SAMPLES};
use crate::analysis::{run_sweep, SweepGrid, SweepSpec};
use crate::cce::Observable;
use crate::error::{invalid, Error, Result};
use crate::spin_model::ModelParams;

pub const LIBRARY_SCHEMA: &str = "nvbath.library/1";
/// Between-cell interpolation recorded in every library.
pub const INTERPOLATION: &str = "bilinear-pdf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryCell {
    pub thickness: f64,
    pub density: f64,
    /// 1/T2*, ms^-1, ascending.
    pub rates: Vec<f64>,
    pub histogram: HistogramSpec,
    /// Configurations without a finite rate (failed, or no weak spins).
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryProvenance {
    pub tool_version: String,
    pub sweep: SweepSpec,
    pub interpolation: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceLibrary {
    pub schema: String,
    pub thicknesses: Vec<f64>,
    pub densities: Vec<f64>,
    /// Row-major: thickness outer, density inner.
    pub cells: Vec<LibraryCell>,
    pub provenance: LibraryProvenance,
    #[serde(skip)]
    pdfs: Vec<RatePdf>,
}

impl PartialEq for CoherenceLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.thicknesses == other.thicknesses
            && self.densities == other.densities
            && self.cells == other.cells
            && self.provenance == other.provenance
    }
}

impl CoherenceLibrary {
    /// Library from a finished T2* sweep.
    pub fn from_sweep(grid: &SweepGrid) -> Result<Self> {
        if !matches!(grid.spec.observable, Observable::RamseyT2Star) {
            return Err(invalid("a library needs a T2* sweep"));
        }
        let mut warnings = Vec::new();
        let mut cells = Vec::with_capacity(grid.cells.len());
        for c in &grid.cells {
            let mut rates: Vec<f64> = c.finite_values().into_iter().filter(|t| *t > 0.0).map(|t| 1.0 / t).collect();
            if rates.is_empty() {
                return Err(Error::EmptyCell { thickness: c.thickness, density: c.density });
            }
            rates.sort_by(f64::total_cmp);
            if rates.len() < RECOMMENDED_SAMPLES {
                warnings.push(format!(
                    "cell ({} nm, {} ppm) has {} samples, fewer than {RECOMMENDED_SAMPLES}",
                    c.thickness,
                    c.density,
                    rates.len()
                ));
            }
            let n_dropped = c.samples.len() - rates.len();
            cells.push(LibraryCell {
                thickness: c.thickness,
                density: c.density,
                histogram: histogram_spec(&rates)?,
                rates,
                n_dropped,
            });
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Self::new(
            grid.spec.thicknesses.clone(),
            grid.spec.densities.clone(),
            cells,
            LibraryProvenance {
                tool_version: grid.tool_version.clone(),
                sweep: grid.spec.clone(),
                interpolation: INTERPOLATION.into(),
                warnings,
            },
        )
    }

    pub fn new(
        thicknesses: Vec<f64>,
        densities: Vec<f64>,
        cells: Vec<LibraryCell>,
        provenance: LibraryProvenance,
    ) -> Result<Self> {
        let mut lib = CoherenceLibrary { schema: LIBRARY_SCHEMA.into(), thicknesses, densities, cells, provenance, pdfs: Vec::new() };
        lib.validate()?;
        lib.pdfs = lib.cells.iter().map(|c| build_pdf(&c.rates, &c.histogram)).collect::<Result<_>>()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("thickness", &self.thicknesses), ("density", &self.densities)] {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid(format!("library {name} axis must be strictly increasing")));
            }
        }
        if self.cells.len() != self.thicknesses.len() * self.densities.len() {
            return Err(invalid("library cell count does not match its axes"));
        }
        for c in &self.cells {
            if c.rates.is_empty() {
                return Err(Error::EmptyCell { thickness: c.thickness, density: c.density });
            }
            if c.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(invalid("library rates must be finite and positive"));
            }
            c.histogram.validate()?;
        }
        Ok(())
    }

    pub fn cell(&self, ti: usize, di: usize) -> &LibraryCell {
        &self.cells[ti * self.densities.len() + di]
    }

    pub fn pdf(&self, ti: usize, di: usize) -> &RatePdf {
        &self.pdfs[ti * self.densities.len() + di]
    }

    /// Interpolated density `P(rate | thickness, density)`: the floored cell
    /// densities mixed bilinearly. Coordinates are clamped to the grid.
    pub fn eval(&self, rate: f64, thickness: f64, density: f64) -> f64 {
        let (t0, t1, ft) = bracket(&self.thicknesses, thickness);
        let (d0, d1, fd) = bracket(&self.densities, density);
        let p = |ti, di| self.pdf(ti, di).eval(rate);
        (1.0 - ft) * ((1.0 - fd) * p(t0, d0) + fd * p(t0, d1)) + ft * ((1.0 - fd) * p(t1, d0) + fd * p(t1, d1))
    }

    /// Whether every contributing cell floors `rate` at this point.
    pub fn is_floored(&self, rate: f64, thickness: f64, density: f64) -> bool {
        let (t0, t1, _) = bracket(&self.thicknesses, thickness);
        let (d0, d1, _) = bracket(&self.densities, density);
        [(t0, d0), (t0, d1), (t1, d0), (t1, d1)].iter().all(|&(ti, di)| self.pdf(ti, di).is_floored(rate))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: CoherenceLibrary = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if raw.schema != LIBRARY_SCHEMA {
            return Err(Error::Schema { expected: LIBRARY_SCHEMA.into(), found: raw.schema });
        }
        Self::new(raw.thicknesses, raw.densities, raw.cells, raw.provenance)
    }
}

/// Neighbouring indices and fraction for `x` on an increasing axis.
pub(crate) fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let j = axis.partition_point(|a| *a <= x);
    let i = j - 1;
    (i, j, (x - axis[i]) / (axis[j] - axis[i]))
}

/// Run a T2* sweep and turn it into a library.
pub fn build_library(spec: &SweepSpec, params: &ModelParams, checkpoint: Option<&Path>) -> Result<CoherenceLibrary> {
    if !matches!(spec.observable, Observable::RamseyT2Star) {
        return Err(invalid("a library needs a T2* sweep"));
    }
    CoherenceLibrary::from_sweep(&run_sweep(spec, params, checkpoint)?)
}
