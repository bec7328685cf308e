//! Coherence curves and their delimited-text form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TOOL_VERSION;

pub const CURVE_SCHEMA: &str = "nvbath.curve/1";

/// L(t) on a time grid (ms), with free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub metadata: BTreeMap<String, String>,
}

impl CoherenceCurve {
    pub fn new(times: Vec<f64>, values: Vec<Complex64>) -> Self {
        CoherenceCurve { times, values, metadata: BTreeMap::new() }
    }

    pub fn constant(times: &[f64], value: f64) -> Self {
        Self::new(times.to_vec(), vec![Complex64::new(value, 0.0); times.len()])
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Largest |L(t)| - 1 (positive means the curve exceeds 1).
    pub fn max_excess(&self) -> f64 {
        self.values.iter().map(|z| z.norm() - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_difference(&self, other: &CoherenceCurve) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Mean of |L_a - L_b| over the grid.
    pub fn mean_abs_difference(&self, other: &CoherenceCurve) -> f64 {
        let n = self.values.len().max(1) as f64;
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).sum::<f64>() / n
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# tool: {TOOL_VERSION}").unwrap();
        writeln!(s, "# schema: {CURVE_SCHEMA}").unwrap();
        for (k, v) in &self.metadata {
            writeln!(s, "# {k}: {v}").unwrap();
        }
        s.push_str("time_ms,re_L,im_L\n");
        for (t, z) in self.times.iter().zip(&self.values) {
            writeln!(s, "{t:e},{:e},{:e}", z.re, z.im).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut curve = CoherenceCurve::new(vec![], vec![]);
        let mut schema = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once(": ") {
                    match k {
                        "schema" => schema = Some(v.to_string()),
                        "tool" => {}
                        _ => {
                            curve.metadata.insert(k.to_string(), v.to_string());
                        }
                    }
                }
                continue;
            }
            if line.starts_with("time_ms") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns in curve row '{line}'")));
            }
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
            curve.times.push(p(cols[0])?);
            curve.values.push(Complex64::new(p(cols[1])?, p(cols[2])?));
        }
        match schema {
            Some(s) if s == CURVE_SCHEMA => Ok(curve),
            Some(s) => Err(Error::Schema { expected: CURVE_SCHEMA.into(), found: s }),
            None => Err(Error::Schema { expected: CURVE_SCHEMA.into(), found: "none".into() }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let c = CoherenceCurve::new(vec![0.0, 0.1, 1.0 / 3.0], vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.123456789012345678, -1e-17),
            Complex64::new(-0.5, 0.25),
        ])
        .with_meta("seed", 7);
        let back = CoherenceCurve::from_text(&c.to_text()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = "# schema: other/1\ntime_ms,re_L,im_L\n0,1,0\n";
        assert!(matches!(CoherenceCurve::from_text(text), Err(Error::Schema { .. })));
    }
}
