//! The artifact-producing commands behind the `nvbath` driver: each takes a
//! resolved argument set and writes its outputs under the given path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{run_sweep, SweepGrid, SweepSpec};
use crate::bath::{
    default_lateral_radius, generate_bath, load_bath, save_bath, BathConfiguration, BathGeometry, PlacementMode,
    T2_CONVERGED_SPINS,
};
use crate::cce::sequence::{hahn_time_scale, linear_grid, log_grid, ramsey_grid};
use crate::cce::{
    cce_coherence, partition_strong_weak, BathStateMode, CoherenceCurve, HahnSettings, Observable, PulseSequence,
    SequenceKind,
};
use crate::coupling::{yield_sweep, YieldReport};
use crate::error::{invalid, Error, Result};
use crate::mle::{build_library, estimate_density, likelihood_surface, CoherenceLibrary, DensityEstimate};
use crate::spin_model::{FieldConfig, Isotope, ModelParams, ParameterSet};

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Common {
    pub isotope: Isotope,
    /// Gauss
    pub field: f64,
    pub seed: u64,
    /// Parameter file replacing the bundled constants.
    pub params_file: Option<PathBuf>,
}

impl Default for Common {
    fn default() -> Self {
        Common { isotope: Isotope::N15, field: 50.0, seed: 0, params_file: None }
    }
}

impl Common {
    pub fn params(&self) -> Result<ModelParams> {
        let set = match &self.params_file {
            Some(p) => ParameterSet::load(p)?,
            None => ParameterSet::default(),
        };
        ModelParams::from_set(&set, self.isotope)
    }

    pub fn field(&self) -> Result<FieldConfig> {
        FieldConfig::new(self.field)
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(invalid("density must be positive"));
    }
    Ok(())
}

/// A slab around the central spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryArgs {
    /// ppm
    pub density: f64,
    /// nm
    pub thickness: f64,
    /// nm; by default large enough for a converged Hahn echo.
    pub lateral_radius: Option<f64>,
    pub placement: PlacementMode,
}

impl GeometryArgs {
    pub fn resolve(&self, common: &Common, params: &ModelParams) -> Result<BathGeometry> {
        check_density(self.density)?;
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(invalid("thickness must be positive"));
        }
        let radius = match self.lateral_radius {
            Some(r) => r,
            None => default_lateral_radius(self.density, self.thickness, T2_CONVERGED_SPINS, &params.constants)?,
        };
        Ok(BathGeometry::new(self.density, self.thickness, radius)?
            .with_isotope(common.isotope)
            .with_placement(self.placement))
    }
}

pub fn cmd_bath(common: &Common, geometry: &GeometryArgs, out: &Path) -> Result<BathConfiguration> {
    let params = common.params()?;
    let g = geometry.resolve(common, &params)?;
    let config = generate_bath(&g, common.seed, &params.constants)?;
    save_bath(out, &config)?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BathSource {
    File(PathBuf),
    Generate(GeometryArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceArgs {
    pub kind: SequenceKind,
    pub bath: BathSource,
    /// Defaults to 1 for Ramsey and 4 for the Hahn echo.
    pub order: Option<usize>,
    pub n_states: usize,
    /// Cluster connectivity over the mean nearest-neighbour distance.
    pub radius_factor: f64,
    pub mode: BathStateMode,
    /// Linear grid up to this time (ms) instead of the default grid.
    pub t_max: Option<f64>,
    pub n_times: usize,
}

impl Default for CoherenceArgs {
    fn default() -> Self {
        let h = HahnSettings::default();
        CoherenceArgs {
            kind: SequenceKind::HahnEcho,
            bath: BathSource::Generate(GeometryArgs {
                density: 1.0,
                thickness: 10.0,
                lateral_radius: None,
                placement: PlacementMode::LatticeSite,
            }),
            order: None,
            n_states: h.n_bath_states,
            radius_factor: h.radius_factor,
            mode: h.mode,
            t_max: None,
            n_times: h.n_times,
        }
    }
}

pub fn cmd_coherence(common: &Common, args: &CoherenceArgs, out: &Path) -> Result<CoherenceCurve> {
    let params = common.params()?;
    let field = common.field()?;
    let config = match &args.bath {
        BathSource::File(p) => load_bath(p)?,
        BathSource::Generate(g) => generate_bath(&g.resolve(common, &params)?, common.seed, &params.constants)?,
    };
    if config.geometry.isotope != common.isotope {
        log::warn!("bath isotope {:?} differs from --isotope {:?}", config.geometry.isotope, common.isotope);
    }
    let order = args.order.unwrap_or(match args.kind {
        SequenceKind::Ramsey => 1,
        SequenceKind::HahnEcho => crate::cce::sequence::HAHN_DEFAULT_ORDER,
    });
    if args.n_times < 2 {
        return Err(invalid("need at least two time points"));
    }
    let times = match (args.t_max, args.kind) {
        (Some(t), _) => {
            if !(t > 0.0) {
                return Err(invalid("t_max must be positive"));
            }
            linear_grid(t, args.n_times)
        }
        (None, SequenceKind::Ramsey) => {
            let t2 = partition_strong_weak(&config, &params.central, &params.constants)?.t2_star;
            if t2.is_finite() { ramsey_grid(t2) } else { linear_grid(1.0, args.n_times) }
        }
        (None, SequenceKind::HahnEcho) => log_grid(hahn_time_scale(config.geometry.density_ppm), args.n_times),
    };
    let settings = HahnSettings {
        order,
        radius_factor: args.radius_factor,
        n_bath_states: args.n_states,
        n_times: args.n_times,
        mode: args.mode,
        ..HahnSettings::default()
    };
    let cce = settings.cce_config(config.geometry.density_ppm, &params, times)?;
    let sequence = PulseSequence::of_kind(args.kind);
    let curve = cce_coherence(&config, &params, &cce, &sequence, field, common.seed)?
        .with_meta("sequence", format!("{:?}", args.kind).to_lowercase())
        .with_meta("isotope", format!("{:?}", common.isotope).to_lowercase())
        .with_meta("seed", common.seed)
        .with_meta("geometry", serde_json::to_string(&config.geometry)?);
    curve.save(out)?;
    Ok(curve)
}

/// Grid axes and per-cell effort of a sweep or library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridArgs {
    pub thicknesses: Vec<f64>,
    pub densities: Vec<f64>,
    pub n_configs: usize,
    pub observable: Observable,
    pub placement: PlacementMode,
}

impl GridArgs {
    pub fn spec(&self, common: &Common) -> Result<SweepSpec> {
        for &d in &self.densities {
            check_density(d)?;
        }
        let spec = SweepSpec {
            thicknesses: self.thicknesses.clone(),
            densities: self.densities.clone(),
            n_configs: self.n_configs,
            observable: self.observable,
            isotope: common.isotope,
            placement: self.placement,
            field: common.field()?,
            seed: common.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `<out>` with its extension replaced by `ext`.
pub fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

/// Writes the grid to `out` (also the checkpoint, so an interrupted run
/// resumes) and the stats table next to it as `.csv`.
pub fn cmd_sweep(common: &Common, args: &GridArgs, out: &Path) -> Result<SweepGrid> {
    let params = common.params()?;
    let grid = run_sweep(&args.spec(common)?, &params, Some(out))?;
    grid.save(out)?;
    std::fs::write(sibling(out, "csv"), grid.stats_table())?;
    Ok(grid)
}

pub fn cmd_library(common: &Common, args: &GridArgs, out: &Path) -> Result<CoherenceLibrary> {
    if !matches!(args.observable, Observable::RamseyT2Star) {
        return Err(invalid("a library is built from T2* samples"));
    }
    let params = common.params()?;
    let checkpoint = sibling(out, "sweep.partial");
    let lib = build_library(&args.spec(common)?, &params, Some(&checkpoint))?;
    lib.save(out)?;
    std::fs::remove_file(&checkpoint)?;
    Ok(lib)
}

/// T2* values in microseconds, one per line; `#` starts a comment.
pub fn parse_measurements(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 = body.parse().map_err(|e| Error::Parse(format!("line {}: '{body}': {e}", k + 1)))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("line {}: T2* must be positive, got {v}", k + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(invalid("no measurements found"));
    }
    Ok(out)
}

pub const MLE_SCHEMA: &str = "nvbath.mle/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    pub schema: String,
    pub tool_version: String,
    /// Seed of the sweep the library was built from.
    pub library_seed: u64,
    pub library_thicknesses: Vec<f64>,
    pub library_densities: Vec<f64>,
    /// Measured T2*, microseconds.
    pub t2star_us: Vec<f64>,
    pub estimate: DensityEstimate,
    /// Measurement/cell pairs that hit the probability floor.
    pub n_floored: usize,
    /// Most likely cell over the whole grid: (thickness nm, density ppm).
    pub grid_argmax: (f64, f64),
}

pub fn cmd_mle(library: &Path, data: &Path, thickness: f64, out: &Path) -> Result<MleReport> {
    let lib = CoherenceLibrary::load(library)?;
    let t2star_us = parse_measurements(&std::fs::read_to_string(data)?)?;
    // 1/T2* in ms^-1
    let rates: Vec<f64> = t2star_us.iter().map(|t| 1e3 / t).collect();
    let surface = likelihood_surface(&rates, &lib)?;
    let estimate = estimate_density(&surface, thickness)?;
    let report = MleReport {
        schema: MLE_SCHEMA.into(),
        tool_version: crate::TOOL_VERSION.into(),
        library_seed: lib.provenance.sweep.seed,
        library_thicknesses: lib.thicknesses.clone(),
        library_densities: lib.densities.clone(),
        t2star_us,
        estimate,
        n_floored: surface.n_floored,
        grid_argmax: (surface.thicknesses[surface.argmax.0], surface.densities[surface.argmax.1]),
    };
    std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Writes the report to `out` and its table next to it as `.csv`.
pub fn cmd_yield(
    common: &Common,
    densities: &[f64],
    thicknesses: &[f64],
    n_configs: usize,
    out: &Path,
) -> Result<YieldReport> {
    let params = common.params()?;
    let report = yield_sweep(densities, thicknesses, n_configs, common.seed, &params)?;
    report.save(out)?;
    std::fs::write(sibling(out, "csv"), report.table())?;
    Ok(report)
}

/// Axis values from `a,b,c`, `lo:hi` (unit steps), `lo:hi:n` (n linear
/// points) or `lo:hi:log[:n]` (log spacing, 10 points per decade unless `n`
/// is given). Endpoints are included.
pub fn parse_axis(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}' in axis '{text}': {e}")))
    };
    let count = |s: &str| -> Result<usize> {
        match s.trim().parse::<usize>() {
            Ok(n) if n >= 2 => Ok(n),
            _ => Err(Error::Parse(format!("'{s}' in axis '{text}' is not a point count of at least 2"))),
        }
    };
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [list] => list.split(',').map(num).collect::<Result<Vec<f64>>>()?,
        [lo, hi, rest @ ..] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(hi > lo) {
                return Err(Error::Parse(format!("axis '{text}' needs hi > lo")));
            }
            match rest {
                [] => {
                    let n = ((hi - lo) + 1e-9).floor() as usize;
                    (0..=n).map(|k| lo + k as f64).collect()
                }
                [s] if s.trim() == "log" => log_axis(lo, hi, None)?,
                [s, n] if s.trim() == "log" => log_axis(lo, hi, Some(count(n)?))?,
                [n] => {
                    let n = count(n)?;
                    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
                }
                _ => return Err(Error::Parse(format!("cannot read axis '{text}'"))),
            }
        }
        _ => return Err(Error::Parse(format!("cannot read axis '{text}'"))),
    };
    if values.is_empty() || values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parse(format!("axis '{text}' must be strictly increasing")));
    }
    Ok(values)
}

fn log_axis(lo: f64, hi: f64, n: Option<usize>) -> Result<Vec<f64>> {
    if !(lo > 0.0) {
        return Err(Error::Parse("a log axis needs a positive lower end".into()));
    }
    let decades = (hi / lo).log10();
    let n = n.unwrap_or(((10.0 * decades).round() as usize).max(1) + 1);
    Ok((0..n)
        .map(|k| {
            let v = lo * 10f64.powf(decades * k as f64 / (n - 1) as f64);
            // keep decimal endpoints exact
            if k == 0 { lo } else if k == n - 1 { hi } else { round_sig(v, 12) }
        })
        .collect())
}

fn round_sig(v: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}
