use serde::{Deserialize, Serialize};

use super::IndexFunction;
use crate::Result;

fn one() -> f64 {
    1.0
}

/// Config-file form of an index function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum IndexSpec {
    Monomial {
        #[serde(default = "one")]
        c: f64,
        e: f64,
    },
    Log {
        mu: f64,
        #[serde(rename = "C", default = "one")]
        c: f64,
    },
    Combination { terms: Vec<WeightedSpec> },
    Composition { outer: Box<IndexSpec>, inner: Box<IndexSpec> },
    Antiderivative { of: Box<IndexSpec> },
    Inverse { of: Box<IndexSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSpec {
    pub weight: f64,
    #[serde(rename = "fn")]
    pub function: IndexSpec,
}

impl IndexSpec {
    pub fn build(&self) -> Result<IndexFunction> {
        match self {
            IndexSpec::Monomial { c, e } => IndexFunction::monomial(*c, *e),
            IndexSpec::Log { mu, c } => IndexFunction::logarithmic(*mu, *c),
            IndexSpec::Combination { terms } => IndexFunction::linear_combination(
                terms
                    .iter()
                    .map(|t| Ok((t.weight, t.function.build()?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            IndexSpec::Composition { outer, inner } => IndexFunction::compose(outer.build()?, inner.build()?),
            IndexSpec::Antiderivative { of } => Ok(IndexFunction::antiderivative_of(of.build()?)),
            IndexSpec::Inverse { of } => IndexFunction::inverse_of(of.build()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_records() {
        let json = r#"{"family":"combination","terms":[
            {"weight":1.0,"fn":{"family":"monomial","e":2.0}},
            {"weight":0.5,"fn":{"family":"composition",
                "outer":{"family":"monomial","c":1.0,"e":0.5},
                "inner":{"family":"log","mu":1.0}}}]}"#;
        let spec: IndexSpec = serde_json::from_str(json).unwrap();
        let f = spec.build().unwrap();
        let t = (-3.0f64).exp();
        let expected = t * t + 0.5 * (1.0 / 3.0f64).sqrt();
        assert!((f.evaluate(t).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let spec: IndexSpec = serde_json::from_str(r#"{"family":"monomial","c":-1.0,"e":2.0}"#).unwrap();
        assert!(spec.build().is_err());
        assert!(serde_json::from_str::<IndexSpec>(r#"{"family":"spline"}"#).is_err());
    }
}
