use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::index::IndexSpec;
use crate::numeric::log_space;
use crate::problem::ProblemSpec;
use crate::solver::SolverConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Canonical source condition, `phi = sigma`.
    #[default]
    Thm2,
    /// Approximate source condition through a distance function.
    Thm3,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm2" => Ok(Mode::Thm2),
            "thm3" => Ok(Mode::Thm3),
            other => Err(Error::Parse(format!("unknown mode '{other}' (expected thm2 or thm3)"))),
        }
    }
}

/// Decay profile for the approximate-source mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistanceSpec {
    /// The distance function of the configured operator.
    Operator,
    /// `d(R) = [log R]^(-nu)` for `R > r_bar`.
    Log {
        nu: f64,
        #[serde(default = "one")]
        r_bar: f64,
    },
}

/// Noise levels, listed or log-spaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaGrid {
    Explicit(Vec<f64>),
    LogSpaced { from: f64, to: f64, points: usize },
}

impl DeltaGrid {
    /// Grid values, validated strictly decreasing and positive.
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Self::Explicit(v) => v.clone(),
            Self::LogSpaced { from, to, points } => log_space(*from, *to, *points),
        };
        if v.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidConfig("noise levels must be positive".into()));
        }
        if v.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidConfig("delta grid must be strictly decreasing".into()));
        }
        Ok(v)
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn ten() -> f64 {
    10.0
}
fn one_usize() -> usize {
    1
}
fn thousand() -> usize {
    1000
}
fn identity_spec() -> IndexSpec {
    IndexSpec::Monomial { c: 1.0, e: 1.0 }
}
fn default_grid() -> DeltaGrid {
    DeltaGrid::Explicit(vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub psi: IndexSpec,
    #[serde(default)]
    pub mode: Mode,
    /// Rate function for the canonical mode (defaults to `sigma`).
    #[serde(default)]
    pub phi: Option<IndexSpec>,
    #[serde(default = "identity_spec")]
    pub sigma: IndexSpec,
    #[serde(default)]
    pub distance: Option<DistanceSpec>,
    /// Structural constant; measured on the level-set samples when absent.
    #[serde(default)]
    pub structural_c: Option<f64>,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "half")]
    pub c_q: f64,
    /// Overrides the certified `beta2`.
    #[serde(default)]
    pub beta2: Option<f64>,
    /// Quasi-additivity constants; computed for monomial misfits when absent.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default = "default_grid")]
    pub delta_grid: DeltaGrid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub alpha_max: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Pass threshold, relative to the coarsest-level ratio.
    #[serde(default = "ten")]
    pub ratio_factor: f64,
    #[serde(default = "one_usize")]
    pub repeats: usize,
    #[serde(default = "thousand")]
    pub vi_samples: usize,
    /// Run the sweep even when certification fails or is unavailable.
    #[serde(default)]
    pub override_vi: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.delta_grid.values()?;
        if !(self.alpha_max > 0.0) || !(self.ratio_factor > 0.0) {
            return Err(Error::InvalidConfig("alpha_max and ratio_factor must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if !(self.q > 1.0) || !(self.c_q > 0.0) {
            return Err(Error::InvalidConfig("need q > 1 and c_q > 0".into()));
        }
        for v in [self.beta2, self.a, self.b, self.structural_c].into_iter().flatten() {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("constants must be positive, got {v}")));
            }
        }
        if self.mode == Mode::Thm3 && self.distance.is_none() {
            return Err(Error::InvalidConfig("thm3 mode needs a distance spec".into()));
        }
        self.solver.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"operator": {"kind": "diag", "s": {"n": 10, "decay": 1.0}},
                    "x_dagger": {"xdag": "decay", "beta": 2.0, "scale": 0.1}},
        "psi": {"family": "monomial", "e": 2.0}
    }"#;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::Thm2);
        assert_eq!(cfg.delta_grid.values().unwrap(), vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.ratio_factor, 10.0);
        assert_eq!(cfg.sigma, IndexSpec::Monomial { c: 1.0, e: 1.0 });
    }

    #[test]
    fn rejects_unordered_grid_and_unknown_fields() {
        let bad = MINIMAL.replacen('{', r#"{"delta_grid": [1e-3, 1e-2],"#, 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replacen('{', r#"{"delta_gird": [1e-1],"#, 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replacen('{', r#"{"mode": "thm3","#, 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn log_spaced_grid() {
        let g = DeltaGrid::LogSpaced { from: 1e-1, to: 1e-5, points: 9 };
        let v = g.values().unwrap();
        assert_eq!(v.len(), 9);
        assert!((v[2] - 1e-2).abs() < 1e-16);
    }
}
