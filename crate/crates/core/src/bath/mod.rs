//! Random P1 baths on the diamond lattice.
//!
//! Crystal frame: x = [100], y = [010], z = [001] (growth axis). The central
//! spin sits on a lattice site at the origin, in the mid-plane of the slab
//! `|z| <= t/2`; the bath is cut to a cylinder of radius R around it.

mod io;

pub use io::{load_bath, save_bath, BathFile, BATH_SCHEMA};

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seeds;
use crate::spin_model::{Isotope, PhysicalConstants};

/// Boundary slack for sites lying exactly on a slab face.
const EDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    #[default]
    LatticeSite,
    ContinuumPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathGeometry {
    pub density_ppm: f64,
    /// Slab extent along [001], nm.
    pub thickness: f64,
    /// In-plane cutoff around the central spin, nm.
    pub lateral_radius: f64,
    pub placement: PlacementMode,
    pub isotope: Isotope,
}

impl BathGeometry {
    pub fn new(density_ppm: f64, thickness: f64, lateral_radius: f64) -> Result<Self> {
        let g = BathGeometry {
            density_ppm,
            thickness,
            lateral_radius,
            placement: PlacementMode::LatticeSite,
            isotope: Isotope::N15,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_isotope(mut self, isotope: Isotope) -> Self {
        self.isotope = isotope;
        self
    }

    pub fn with_placement(mut self, placement: PlacementMode) -> Self {
        self.placement = placement;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density_ppm > 0.0 && self.density_ppm.is_finite()) {
            return Err(invalid("density must be positive"));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(invalid("thickness must be positive"));
        }
        if !(self.lateral_radius > 0.0 && self.lateral_radius.is_finite()) {
            return Err(invalid("lateral radius must be positive"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        PI * self.lateral_radius * self.lateral_radius * self.thickness
    }

    pub fn expected_count(&self, constants: &PhysicalConstants) -> f64 {
        self.density_ppm * 1e-6 * constants.diamond_atomic_density * self.volume()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpin {
    pub position: Vector3<f64>,
    pub jt_axis: usize,
    pub nuclear_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathConfiguration {
    pub central_position: Vector3<f64>,
    pub spins: Vec<BathSpin>,
    pub geometry: BathGeometry,
    pub seed: u64,
}

impl BathConfiguration {
    /// A configuration with explicitly placed spins (tests, fixtures).
    pub fn from_positions(positions: &[Vector3<f64>], geometry: BathGeometry) -> Self {
        let spins = positions
            .iter()
            .map(|&position| BathSpin { position, jt_axis: 0, nuclear_m: geometry.isotope.projections()[0] })
            .collect();
        BathConfiguration { central_position: Vector3::zeros(), spins, geometry, seed: 0 }
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.spins.iter().map(|s| s.position).collect()
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }
}

/// Options that bound generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationOptions {
    /// Refuse regions whose expected spin count exceeds this.
    pub max_expected_spins: usize,
    /// Sites within this distance of the central spin stay empty; `None`
    /// means one C-C bond length.
    pub exclusion_radius: Option<f64>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions { max_expected_spins: 200_000, exclusion_radius: None }
    }
}

/// Defect concentration in ppm of carbon sites to number per nm^3.
pub fn ppm_to_number_density(ppm: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(ppm >= 0.0) {
        return Err(invalid("density must be non-negative"));
    }
    Ok(ppm * 1e-6 * constants.diamond_atomic_density)
}

/// Mean nearest-neighbour distance `0.554 rho^(-1/3)` of a 3D Poisson bath, nm.
pub fn mean_nn_distance_formula(density_ppm: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(density_ppm > 0.0) {
        return Err(invalid("density must be positive"));
    }
    Ok(0.554 * ppm_to_number_density(density_ppm, constants)?.powf(-1.0 / 3.0))
}

/// Lateral radius so the cylinder holds `3 * converged_count` spins on average.
pub fn default_lateral_radius(
    density_ppm: f64,
    thickness: f64,
    converged_count: usize,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let rho = ppm_to_number_density(density_ppm, constants)?;
    if !(rho > 0.0 && thickness > 0.0) {
        return Err(invalid("density and thickness must be positive"));
    }
    Ok((3.0 * converged_count as f64 / (PI * rho * thickness)).sqrt())
}

/// Spin count at which Ramsey results converge.
pub const T2STAR_CONVERGED_SPINS: usize = 12;
/// Spin count at which Hahn-echo results converge.
pub const T2_CONVERGED_SPINS: usize = 100;

/// Thickness actually populated by lattice planes: the number of (004)
/// planes with `|z| <= t/2` times their spacing a/4.
pub fn effective_thickness(thickness: f64, constants: &PhysicalConstants) -> f64 {
    let spacing = constants.diamond_lattice_constant / 4.0;
    let k = ((thickness / 2.0 + EDGE) / spacing).floor();
    (2.0 * k + 1.0) * spacing
}

/// Fractional coordinates of the eight atoms in a conventional cell.
const BASIS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
    [0.25, 0.25, 0.25],
    [0.25, 0.75, 0.75],
    [0.75, 0.25, 0.75],
    [0.75, 0.75, 0.25],
];

pub fn generate_bath(geometry: &BathGeometry, seed: u64, constants: &PhysicalConstants) -> Result<BathConfiguration> {
    generate_bath_with(geometry, seed, constants, &GenerationOptions::default())
}

pub fn generate_bath_with(
    geometry: &BathGeometry,
    seed: u64,
    constants: &PhysicalConstants,
    options: &GenerationOptions,
) -> Result<BathConfiguration> {
    geometry.validate()?;
    let expected = geometry.expected_count(constants);
    if expected > options.max_expected_spins as f64 {
        return Err(Error::BathTooLarge { expected, cap: options.max_expected_spins });
    }
    let exclusion = options.exclusion_radius.unwrap_or_else(|| constants.bond_length()) * (1.0 + 1e-12);
    let mut rng = seeds::rng(seed, &[seeds::tag::BATH]);
    let positions = match geometry.placement {
        PlacementMode::LatticeSite => lattice_positions(geometry, constants, exclusion, &mut rng)?,
        PlacementMode::ContinuumPoisson => continuum_positions(geometry, constants, exclusion, &mut rng)?,
    };
    let ms = geometry.isotope.projections();
    let spins = positions
        .into_iter()
        .map(|position| BathSpin {
            position,
            jt_axis: rng.random_range(0..4),
            nuclear_m: ms[rng.random_range(0..ms.len())],
        })
        .collect();
    Ok(BathConfiguration { central_position: Vector3::zeros(), spins, geometry: *geometry, seed })
}

fn inside(p: &Vector3<f64>, g: &BathGeometry, exclusion: f64) -> bool {
    p.x * p.x + p.y * p.y <= g.lateral_radius * g.lateral_radius
        && p.z.abs() <= g.thickness / 2.0 + EDGE
        && p.norm() > exclusion
}

fn lattice_positions<R: Rng>(
    g: &BathGeometry,
    constants: &PhysicalConstants,
    exclusion: f64,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>> {
    let a = constants.diamond_lattice_constant;
    let range = |half: f64| {
        let lo = (-half / a).floor() as i64 - 1;
        let hi = (half / a).floor() as i64;
        (lo, (hi - lo + 1) as u64)
    };
    let (x0, nx) = range(g.lateral_radius);
    let (z0, nz) = range(g.thickness / 2.0);
    let sites = 8 * nx * nx * nz;
    let p = g.density_ppm * 1e-6;
    let k = Binomial::new(sites, p.min(1.0)).map_err(|e| invalid(e.to_string()))?.sample(rng);
    let mut chosen = HashSet::with_capacity(k as usize);
    while (chosen.len() as u64) < k {
        chosen.insert(rng.random_range(0..sites));
    }
    let mut chosen: Vec<u64> = chosen.into_iter().collect();
    chosen.sort_unstable();
    let mut out = Vec::new();
    for idx in chosen {
        let b = (idx % 8) as usize;
        let cell = idx / 8;
        let iz = (cell % nz) as i64 + z0;
        let iy = ((cell / nz) % nx) as i64 + x0;
        let ix = (cell / nz / nx) as i64 + x0;
        let f = BASIS[b];
        let p = Vector3::new((ix as f64 + f[0]) * a, (iy as f64 + f[1]) * a, (iz as f64 + f[2]) * a);
        if inside(&p, g, exclusion) {
            out.push(p);
        }
    }
    Ok(out)
}

fn continuum_positions<R: Rng>(
    g: &BathGeometry,
    constants: &PhysicalConstants,
    exclusion: f64,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>> {
    let mean = g.expected_count(constants);
    let k = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| invalid(e.to_string()))?.sample(rng) as usize
    } else {
        0
    };
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let r = g.lateral_radius * rng.random::<f64>().sqrt();
        let phi = 2.0 * PI * rng.random::<f64>();
        let z = g.thickness * (rng.random::<f64>() - 0.5);
        let p = Vector3::new(r * phi.cos(), r * phi.sin(), z);
        if p.norm() > exclusion {
            out.push(p);
        }
    }
    Ok(out)
}

/// Keep spins with `|z - z_central| <= new_thickness / 2`.
pub fn slice_bath(config: &BathConfiguration, new_thickness: f64) -> Result<BathConfiguration> {
    if !(new_thickness > 0.0) {
        return Err(invalid("slice thickness must be positive"));
    }
    if new_thickness > config.geometry.thickness + EDGE {
        return Err(invalid("slice thickness exceeds the bath thickness"));
    }
    let z0 = config.central_position.z;
    let spins = config
        .spins
        .iter()
        .filter(|s| (s.position.z - z0).abs() <= new_thickness / 2.0 + EDGE)
        .copied()
        .collect();
    let mut geometry = config.geometry;
    geometry.thickness = new_thickness;
    Ok(BathConfiguration { central_position: config.central_position, spins, geometry, seed: config.seed })
}

/// Distance from the central spin to the closest bath spin, nm.
pub fn nearest_neighbor_distance(config: &BathConfiguration) -> Result<f64> {
    config
        .spins
        .iter()
        .map(|s| (s.position - config.central_position).norm())
        .min_by(f64::total_cmp)
        .ok_or(Error::NoBathSpins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn ppm_conversion() {
        let one = ppm_to_number_density(1.0, &c()).unwrap();
        let oracle = 8.0 / 0.3567f64.powi(3) * 1e-6;
        assert!((one - oracle).abs() < 1e-3 * oracle);
        assert!((one - 1.763e-4).abs() < 1e-6);
        assert_eq!(ppm_to_number_density(0.0, &c()).unwrap(), 0.0);
        assert!((ppm_to_number_density(10.0, &c()).unwrap() - 10.0 * one).abs() < 1e-18);
        assert!(ppm_to_number_density(-1.0, &c()).is_err());
    }

    #[test]
    fn mean_nn_formula_values() {
        assert!((mean_nn_distance_formula(1.0, &c()).unwrap() - 9.9).abs() < 0.05);
        assert!((mean_nn_distance_formula(3.0, &c()).unwrap() - 6.9).abs() < 0.05);
        let r1 = mean_nn_distance_formula(1.0, &c()).unwrap();
        let r8 = mean_nn_distance_formula(8.0, &c()).unwrap();
        assert!((r8 - r1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic_and_inside_region() {
        let g = BathGeometry::new(20.0, 6.0, 15.0).unwrap();
        let a = generate_bath(&g, 42, &c()).unwrap();
        let b = generate_bath(&g, 42, &c()).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        let other = generate_bath(&g, 43, &c()).unwrap();
        assert_ne!(a, other);
        for s in &a.spins {
            assert!(s.position.x.hypot(s.position.y) <= 15.0);
            assert!(s.position.z.abs() <= 3.0 + 1e-9);
            assert!(s.position.norm() > c().bond_length());
            assert!(s.jt_axis < 4);
            assert!(s.nuclear_m == 0.5 || s.nuclear_m == -0.5);
        }
    }

    #[test]
    fn lattice_sites_are_diamond_sites() {
        let g = BathGeometry::new(2000.0, 2.0, 3.0).unwrap();
        let bath = generate_bath(&g, 1, &c()).unwrap();
        let a = c().diamond_lattice_constant;
        for s in &bath.spins {
            let f = s.position / (a / 4.0);
            let r = f.map(|x| x.round());
            assert!((f - r).norm() < 1e-9);
            // diamond: all quarter-coordinates share parity, and sum = 0 or 1 mod 4 pattern
            let (x, y, z) = (r.x as i64, r.y as i64, r.z as i64);
            let all_even = x % 2 == 0 && y % 2 == 0 && z % 2 == 0;
            let all_odd = x.rem_euclid(2) == 1 && y.rem_euclid(2) == 1 && z.rem_euclid(2) == 1;
            assert!(all_even || all_odd);
            if all_even {
                assert_eq!((x + y + z).rem_euclid(4), 0);
            } else {
                assert_eq!((x + y + z).rem_euclid(4), 3);
            }
        }
    }

    #[test]
    fn mean_count_matches_density_times_volume() {
        // 1 ppm, 10 nm, R = 50 nm: rho pi R^2 t ~ 13.8
        let g = BathGeometry::new(1.0, 10.0, 50.0).unwrap();
        let expected = g.expected_count(&c());
        assert!((expected - 13.85).abs() < 0.05, "{expected}");
        let n = 2000;
        let counts: Vec<f64> = (0..n).map(|s| generate_bath(&g, s, &c()).unwrap().len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let se = (expected / n as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn continuum_count_matches_density_times_volume() {
        let g = BathGeometry::new(3.0, 4.0, 30.0).unwrap().with_placement(PlacementMode::ContinuumPoisson);
        let expected = g.expected_count(&c());
        let n = 2000;
        let mean = (0..n).map(|s| generate_bath(&g, s, &c()).unwrap().len() as f64).sum::<f64>() / n as f64;
        assert!((mean - expected).abs() < 3.0 * (expected / n as f64).sqrt());
    }

    #[test]
    fn tiny_density_gives_empty_bath() {
        let g = BathGeometry::new(1e-12, 1.0, 5.0).unwrap();
        assert!(generate_bath(&g, 3, &c()).unwrap().is_empty());
    }

    #[test]
    fn oversized_region_is_refused() {
        let g = BathGeometry::new(100.0, 1000.0, 1000.0).unwrap();
        let err = generate_bath(&g, 0, &c()).unwrap_err();
        assert!(err.to_string().starts_with("bath too large"));
    }

    #[test]
    fn invalid_geometry() {
        assert_eq!(BathGeometry::new(0.0, 1.0, 1.0).unwrap_err().to_string(), "invalid parameter: density must be positive");
        assert!(BathGeometry::new(1.0, -1.0, 1.0).is_err());
        assert!(BathGeometry::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn slicing_boundaries() {
        let g = BathGeometry::new(1.0, 10.0, 10.0).unwrap();
        let cfg = BathConfiguration::from_positions(&[Vector3::new(1.0, 0.0, 3.0)], g);
        assert_eq!(slice_bath(&cfg, 10.0).unwrap().spins, cfg.spins);
        assert_eq!(slice_bath(&cfg, 6.0).unwrap().len(), 1);
        assert_eq!(slice_bath(&cfg, 4.0).unwrap().len(), 0);
        assert!(slice_bath(&cfg, 0.0).is_err());
        assert!(slice_bath(&cfg, 12.0).is_err());
    }

    #[test]
    fn halving_thickness_halves_count() {
        let g = BathGeometry::new(5.0, 20.0, 20.0).unwrap();
        let (mut full, mut half) = (0usize, 0usize);
        for s in 0..300 {
            let b = generate_bath(&g, s, &c()).unwrap();
            full += b.len();
            half += slice_bath(&b, 10.0).unwrap().len();
        }
        let ratio = half as f64 / full as f64;
        let eff = effective_thickness(10.0, &c()) / effective_thickness(20.0, &c());
        assert!((ratio - eff).abs() < 0.02, "{ratio} vs {eff}");
    }

    #[test]
    fn nearest_neighbor() {
        let g = BathGeometry::new(1.0, 20.0, 20.0).unwrap();
        let cfg = BathConfiguration::from_positions(
            &[Vector3::new(0.0, 0.0, 7.0), Vector3::new(3.0, 0.0, 0.0), Vector3::new(0.0, 5.0, 0.0)],
            g,
        );
        assert_eq!(nearest_neighbor_distance(&cfg).unwrap(), 3.0);
        let empty = BathConfiguration::from_positions(&[], g);
        assert_eq!(nearest_neighbor_distance(&empty).unwrap_err().to_string(), "no bath spins");
    }

    #[test]
    fn effective_thickness_counts_planes() {
        let a = c().diamond_lattice_constant;
        assert!((effective_thickness(1.0, &c()) - 11.0 * a / 4.0).abs() < 1e-12);
        assert!((effective_thickness(50.0, &c()) - 50.0).abs() < a / 4.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn slicing_composes(seed in 0u64..1000, t1 in 0.5..8.0f64, t2 in 0.5..8.0f64) {
                let g = BathGeometry::new(50.0, 8.0, 6.0).unwrap();
                let b = generate_bath(&g, seed, &c()).unwrap();
                let twice = slice_bath(&slice_bath(&b, t1).unwrap(), t2.min(t1)).unwrap();
                let once = slice_bath(&b, t1.min(t2)).unwrap();
                prop_assert_eq!(twice.spins, once.spins);
            }
        }
    }
}
