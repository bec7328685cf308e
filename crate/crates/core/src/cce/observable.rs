//! Coherence times over many random configurations of one geometry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::cce_coherence;
use super::partition::partition_strong_weak;
use super::sequence::{hahn_time_scale, log_grid, BathStateMode, CCEConfig, PulseSequence, HAHN_DEFAULT_ORDER};
use super::CoherenceCurve;
use crate::analysis::{fit_stretched_exponential, ramsey_t2star, StretchedExpFit};
use crate::bath::{generate_bath, mean_nn_distance_formula, BathConfiguration, BathGeometry};
use crate::error::{Error, Result};
use crate::seeds;
use crate::spin_model::{CouplingModel, FieldConfig, ModelParams};

/// Settings for Hahn-echo coherence times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HahnSettings {
    pub order: usize,
    /// Cluster connectivity radius in units of the mean nearest-neighbour distance.
    pub radius_factor: f64,
    pub n_bath_states: usize,
    /// Log-spaced points per grid (plus t = 0).
    pub n_times: usize,
    pub mode: BathStateMode,
    pub coupling: CouplingModel,
    /// Times the grid is moved up a decade when the decay does not reach 1/e.
    pub max_extensions: usize,
}

impl Default for HahnSettings {
    fn default() -> Self {
        HahnSettings {
            order: HAHN_DEFAULT_ORDER,
            radius_factor: DEFAULT_RADIUS_FACTOR,
            n_bath_states: 20,
            n_times: 40,
            mode: BathStateMode::Sampled { mean_field: true },
            coupling: CouplingModel::Secular,
            max_extensions: 2,
        }
    }
}

/// Default connectivity radius over the mean nearest-neighbour distance.
pub const DEFAULT_RADIUS_FACTOR: f64 = 2.0;

impl HahnSettings {
    pub fn dipole_radius(&self, density_ppm: f64, params: &ModelParams) -> Result<f64> {
        Ok(self.radius_factor * mean_nn_distance_formula(density_ppm, &params.constants)?)
    }

    pub fn cce_config(&self, density_ppm: f64, params: &ModelParams, times: Vec<f64>) -> Result<CCEConfig> {
        let mut cfg = CCEConfig::new(self.order, self.dipole_radius(density_ppm, params)?, self.n_bath_states, times);
        cfg.mode = self.mode;
        cfg.coupling = self.coupling;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Observable {
    /// `sqrt(2)/A_bath` of the weak set.
    RamseyT2Star,
    /// T2 from a stretched-exponential fit of the CCE Hahn-echo curve.
    HahnT2(HahnSettings),
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::RamseyT2Star => "t2star",
            Observable::HahnT2(_) => "t2",
        }
    }
}

/// One configuration's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub index: usize,
    pub config_seed: u64,
    pub n_spins: usize,
    /// ms; `None` when the configuration failed (see `error`). Infinite T2*
    /// (no weak spins) is kept as infinity.
    #[serde(with = "opt_f64")]
    pub value: Option<f64>,
    pub fit: Option<StretchedExpFit>,
    pub error: Option<String>,
}

/// Seed of configuration `index` under the user seed.
pub fn config_seed(seed: u64, index: usize) -> u64 {
    seeds::derive(seed, &[index as u64])
}

/// Hahn-echo curve of one configuration on the default grid for its density,
/// moved up a decade at a time while the decay stays above 1/e.
pub fn hahn_curve_adaptive(
    config: &BathConfiguration,
    params: &ModelParams,
    settings: &HahnSettings,
    field: FieldConfig,
    seed: u64,
) -> Result<(CoherenceCurve, StretchedExpFit)> {
    let density = config.geometry.density_ppm;
    let mut center = hahn_time_scale(density);
    let mut last_err = Error::InsufficientDecay;
    for _ in 0..=settings.max_extensions {
        let cfg = settings.cce_config(density, params, log_grid(center, settings.n_times))?;
        let curve = cce_coherence(config, params, &cfg, &PulseSequence::hahn_echo(), field, seed)?;
        match fit_stretched_exponential(&curve) {
            Ok(fit) => return Ok((curve, fit)),
            Err(Error::InsufficientDecay) => {
                last_err = Error::InsufficientDecay;
                center *= 10.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err)
}

/// Generate `n_configs` baths of `geometry` and extract one coherence time
/// from each. Failures are recorded per configuration.
pub fn simulate_observable(
    geometry: &BathGeometry,
    n_configs: usize,
    observable: &Observable,
    params: &ModelParams,
    field: FieldConfig,
    seed: u64,
) -> Result<Vec<ObservableSample>> {
    if n_configs == 0 {
        return Err(Error::InvalidParameter("n_configs must be at least 1".into()));
    }
    geometry.validate()?;
    let run = |index: usize| -> ObservableSample {
        let cs = config_seed(seed, index);
        let mut sample = ObservableSample { index, config_seed: cs, n_spins: 0, value: None, fit: None, error: None };
        let outcome = generate_bath(geometry, cs, &params.constants).and_then(|config| {
            sample.n_spins = config.len();
            match observable {
                Observable::RamseyT2Star => {
                    let p = partition_strong_weak(&config, &params.central, &params.constants)?;
                    Ok((ramsey_t2star(&p), None))
                }
                Observable::HahnT2(settings) => {
                    let (_, fit) = hahn_curve_adaptive(&config, params, settings, field, cs)?;
                    Ok((fit.t2, Some(fit)))
                }
            }
        });
        match outcome {
            Ok((v, fit)) => {
                sample.value = Some(v);
                sample.fit = fit;
            }
            Err(e) => sample.error = Some(e.to_string()),
        }
        sample
    };
    Ok(match observable {
        // cheap per config: spread configurations over workers
        Observable::RamseyT2Star => (0..n_configs).into_par_iter().map(run).collect(),
        // the engine already parallelises over clusters
        Observable::HahnT2(_) => (0..n_configs).map(run).collect(),
    })
}

/// Infinity-preserving serde for optional floats (JSON has no infinity).
pub(crate) mod opt_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => "inf".serialize(s),
            Some(x) => x.serialize(s),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(serde::de::Error::custom(format!("bad number {t}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::Isotope;

    #[test]
    fn single_config_is_reproducible() {
        let p = ModelParams::default_for(Isotope::N15);
        let g = BathGeometry::new(5.0, 4.0, 30.0).unwrap();
        let a = simulate_observable(&g, 1, &Observable::RamseyT2Star, &p, FieldConfig::default(), 3).unwrap();
        let b = simulate_observable(&g, 1, &Observable::RamseyT2Star, &p, FieldConfig::default(), 3).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
        assert!(a[0].value.unwrap() > 0.0);
    }

    #[test]
    fn sample_json_keeps_infinity() {
        let s = ObservableSample {
            index: 0,
            config_seed: 1,
            n_spins: 1,
            value: Some(f64::INFINITY),
            fit: None,
            error: None,
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: ObservableSample = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
