//! Pulse sequences, CCE settings and time grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spin_model::CouplingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Ramsey,
    HahnEcho,
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramsey" => Ok(SequenceKind::Ramsey),
            "hahn" | "hahn-echo" => Ok(SequenceKind::HahnEcho),
            other => Err(invalid(format!("unknown sequence '{other}' (expected ramsey or hahn)"))),
        }
    }
}

/// Ideal instantaneous pi pulses on the central spin at fractions of the
/// total evolution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    pub pi_pulse_fractions: Vec<f64>,
}

impl PulseSequence {
    pub fn ramsey() -> Self {
        PulseSequence { kind: SequenceKind::Ramsey, pi_pulse_fractions: vec![] }
    }

    pub fn hahn_echo() -> Self {
        PulseSequence { kind: SequenceKind::HahnEcho, pi_pulse_fractions: vec![0.5] }
    }

    pub fn of_kind(kind: SequenceKind) -> Self {
        match kind {
            SequenceKind::Ramsey => Self::ramsey(),
            SequenceKind::HahnEcho => Self::hahn_echo(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.pi_pulse_fractions;
        if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(invalid("pulse fractions must lie in (0, 1)"));
        }
        if f.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("pulse fractions must be strictly increasing"));
        }
        Ok(())
    }

    pub fn n_pulses(&self) -> usize {
        self.pi_pulse_fractions.len()
    }

    /// Free-evolution segment durations for total time `t`.
    pub fn segments(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_pulses() + 1);
        let mut prev = 0.0;
        for &f in &self.pi_pulse_fractions {
            out.push((f - prev) * t);
            prev = f;
        }
        out.push((1.0 - prev) * t);
        out
    }
}

/// How bath product states are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BathStateMode {
    /// Random spin projections, nuclear projections and Jahn-Teller axes per
    /// state; CCE products averaged over states. Optionally adds the static
    /// zz field of out-of-cluster spins.
    Sampled { mean_field: bool },
    /// Each cluster contribution averaged over all of its spin product states,
    /// with the configuration's nuclear assignment held fixed.
    Ensemble,
}

/// How a cluster is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagator {
    /// Bath-only Hamiltonians conditioned on each qubit level.
    #[default]
    Conditional,
    /// Central spin times cluster in the full 3 * 2^n space.
    Exact,
}

/// Treatment of sampled states whose CCE product leaves the unit disc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BreakdownPolicy {
    /// Average every state regardless.
    Keep,
    /// A state is left out of the average from the first time its product
    /// exceeds unit magnitude; times where no state remains are NaN.
    #[default]
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CCEConfig {
    pub order: usize,
    /// Cluster connectivity cutoff, nm.
    pub dipole_radius: f64,
    pub n_bath_states: usize,
    /// ms, strictly increasing from 0.
    pub time_grid: Vec<f64>,
    pub mode: BathStateMode,
    pub coupling: CouplingModel,
    pub propagator: Propagator,
    pub max_clusters: usize,
    pub breakdown: BreakdownPolicy,
}

impl CCEConfig {
    pub fn new(order: usize, dipole_radius: f64, n_bath_states: usize, time_grid: Vec<f64>) -> Self {
        CCEConfig {
            order,
            dipole_radius,
            n_bath_states,
            time_grid,
            mode: BathStateMode::Sampled { mean_field: true },
            coupling: CouplingModel::Secular,
            propagator: Propagator::Conditional,
            max_clusters: 2_000_000,
            breakdown: BreakdownPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(invalid("CCE order must be at least 1"));
        }
        if self.n_bath_states < 1 {
            return Err(invalid("number of bath states must be at least 1"));
        }
        if !(self.dipole_radius > 0.0) {
            return Err(invalid("dipole radius must be positive"));
        }
        validate_time_grid(&self.time_grid)
    }
}

pub fn validate_time_grid(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) {
        return Err(invalid("time grid must start at 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time grid must be strictly increasing and finite"));
    }
    Ok(())
}

/// Default Hahn-echo order.
pub const HAHN_DEFAULT_ORDER: usize = 4;

/// `n` evenly spaced points on [0, t_max].
pub fn linear_grid(t_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

/// Ramsey default: 200 points over five Gaussian decay times.
pub fn ramsey_grid(t2_star: f64) -> Vec<f64> {
    linear_grid(5.0 * t2_star, 200)
}

/// 0 followed by `n` log-spaced points spanning three decades around `center`.
pub fn log_grid(center: f64, n: usize) -> Vec<f64> {
    let lo = (center / 10f64.powf(1.5)).log10();
    let n = n.max(2);
    std::iter::once(0.0)
        .chain((0..n).map(|k| 10f64.powf(lo + 3.0 * k as f64 / (n - 1) as f64)))
        .collect()
}

/// Rough Hahn-echo time scale for a bath of `density_ppm`, ms.
pub fn hahn_time_scale(density_ppm: f64) -> f64 {
    0.16 / density_ppm
}
