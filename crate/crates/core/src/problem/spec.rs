use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{ForwardOperator, Penalty, ProblemInstance, VectorSpaceConfig};
use crate::{Error, Result};

/// Singular values, listed or as the decay recipe `s_j = j^(-decay)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SingularValueSpec {
    Explicit(Vec<f64>),
    Decay { n: usize, decay: f64 },
}

impl SingularValueSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Self::Explicit(v) => Ok(v.clone()),
            Self::Decay { n, decay } => {
                if *n == 0 {
                    return Err(Error::InvalidConfig("operator dimension must be positive".into()));
                }
                Ok((1..=*n).map(|j| (j as f64).powf(-decay)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorSpec {
    Diag { s: SingularValueSpec },
    Quad { s: SingularValueSpec, gamma: f64 },
}

impl OperatorSpec {
    pub fn build(&self) -> Result<ForwardOperator> {
        match self {
            Self::Diag { s } => ForwardOperator::diagonal(s.values()?),
            Self::Quad { s, gamma } => ForwardOperator::quadratic(s.values()?, *gamma),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    HalfSquared,
    Power { q: f64 },
}

impl PenaltySpec {
    pub fn build(&self) -> Result<Penalty> {
        match self {
            Self::HalfSquared => Ok(Penalty::HalfSquaredNorm),
            Self::Power { q } => Penalty::power(*q),
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

/// Exact solution, listed or as `x_j = scale * j^(-beta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SolutionSpec {
    Explicit(Vec<f64>),
    Recipe {
        xdag: String,
        beta: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

impl SolutionSpec {
    pub fn values(&self, n: usize) -> Result<Array1<f64>> {
        match self {
            Self::Explicit(v) => Ok(Array1::from(v.clone())),
            Self::Recipe { xdag, beta, scale } => {
                if xdag != "decay" {
                    return Err(Error::InvalidConfig(format!("unknown x_dagger recipe '{xdag}'")));
                }
                Ok((1..=n).map(|j| scale * (j as f64).powf(-beta)).collect())
            }
        }
    }
}

fn default_norm_exponent() -> f64 {
    2.0
}

fn default_penalty() -> PenaltySpec {
    PenaltySpec::HalfSquared
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub operator: OperatorSpec,
    #[serde(default = "default_penalty")]
    pub penalty: PenaltySpec,
    pub x_dagger: SolutionSpec,
    #[serde(default = "default_norm_exponent")]
    pub norm_exponent: f64,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        let operator = self.operator.build()?;
        let n = operator.dimension();
        let space = VectorSpaceConfig { dimension: n, norm_exponent: self.norm_exponent };
        ProblemInstance::new(space, operator, self.penalty.build()?, self.x_dagger.values(n)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_recipes() {
        let json = r#"{"operator":{"kind":"quad","s":{"n":4,"decay":1.0},"gamma":0.1},
                       "x_dagger":{"xdag":"decay","beta":1.5}}"#;
        let spec: ProblemSpec = serde_json::from_str(json).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.operator.singular_values().to_vec(), vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert_eq!(p.operator.gamma(), 0.1);
        assert!((p.x_dagger[3] - 4f64.powf(-1.5)).abs() < 1e-16);
        assert_eq!(p.penalty, Penalty::HalfSquaredNorm);
    }

    #[test]
    fn parses_explicit() {
        let json = r#"{"operator":{"kind":"diag","s":[1.0,0.1]},"penalty":{"kind":"power","q":4},
                       "x_dagger":[1.0,2.0]}"#;
        let p: ProblemSpec = serde_json::from_str(json).unwrap();
        let p = p.build().unwrap();
        assert_eq!(p.penalty, Penalty::PowerNorm(4.0));
        assert_eq!(p.y.to_vec(), vec![1.0, 0.2]);
    }

    #[test]
    fn rejects_mismatch() {
        let json = r#"{"operator":{"kind":"diag","s":[1.0,0.1]},"x_dagger":[1.0]}"#;
        let p: ProblemSpec = serde_json::from_str(json).unwrap();
        assert!(p.build().is_err());
    }
}
