use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smooth convex penalties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    /// `0.5 * |x|_2^2`
    HalfSquaredNorm,
    /// `(1/q) * |x|_q^q`, `q >= 2`
    PowerNorm(f64),
}

impl Penalty {
    pub fn power(q: f64) -> Result<Self> {
        if !(q >= 2.0 && q.is_finite()) {
            return Err(Error::InvalidConfig(format!("power penalty needs q >= 2, got {q}")));
        }
        Ok(if q == 2.0 { Self::HalfSquaredNorm } else { Self::PowerNorm(q) })
    }

    fn exponent(&self) -> f64 {
        match self {
            Self::HalfSquaredNorm => 2.0,
            Self::PowerNorm(q) => *q,
        }
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        match self {
            Self::HalfSquaredNorm => 0.5 * x.dot(x),
            Self::PowerNorm(q) => x.iter().map(|v| v.abs().powf(*q)).sum::<f64>() / q,
        }
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::HalfSquaredNorm => x.clone(),
            Self::PowerNorm(q) => x.mapv(|v| v.signum() * v.abs().powf(q - 1.0)),
        }
    }

    pub fn hessian_diag(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::HalfSquaredNorm => Array1::ones(x.len()),
            Self::PowerNorm(q) => x.mapv(|v| (q - 1.0) * v.abs().powf(q - 2.0)),
        }
    }

    /// Bregman distance built from its own gradient at `x`, evaluated
    /// componentwise in a cancellation-free form where one exists.
    pub(crate) fn bregman_exact(&self, x_tilde: &Array1<f64>, x: &Array1<f64>) -> f64 {
        let q = self.exponent();
        x_tilde
            .iter()
            .zip(x)
            .map(|(&a, &b)| {
                let d = a - b;
                if q == 2.0 {
                    0.5 * d * d
                } else if q == 4.0 {
                    0.25 * d * d * (a * a + 2.0 * a * b + 3.0 * b * b)
                } else {
                    (a.abs().powf(q) - b.abs().powf(q)) / q - b.signum() * b.abs().powf(q - 1.0) * d
                }
            })
            .sum::<f64>()
            .max(0.0)
    }
}
