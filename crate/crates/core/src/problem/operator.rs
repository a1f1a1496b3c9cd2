use ndarray::Array1;

use crate::{Error, Result};

/// Forward maps on `R^n`. Both kinds act componentwise, so derivatives and
/// adjoints are diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOperator {
    /// `F(x)_j = s_j x_j`
    DiagonalLinear { s: Array1<f64> },
    /// `F(x)_j = s_j x_j + gamma x_j^2`
    QuadraticPerturbation { s: Array1<f64>, gamma: f64 },
}

fn check_singular_values(s: &Array1<f64>) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidConfig("operator needs at least one singular value".into()));
    }
    if let Some(bad) = s.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig(format!("singular values must be positive, got {bad}")));
    }
    Ok(())
}

impl ForwardOperator {
    pub fn diagonal(s: impl Into<Array1<f64>>) -> Result<Self> {
        let s = s.into();
        check_singular_values(&s)?;
        Ok(Self::DiagonalLinear { s })
    }

    pub fn quadratic(s: impl Into<Array1<f64>>, gamma: f64) -> Result<Self> {
        let s = s.into();
        check_singular_values(&s)?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be non-negative, got {gamma}")));
        }
        Ok(Self::QuadraticPerturbation { s, gamma })
    }

    pub fn singular_values(&self) -> &Array1<f64> {
        match self {
            Self::DiagonalLinear { s } | Self::QuadraticPerturbation { s, .. } => s,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Self::DiagonalLinear { .. } => 0.0,
            Self::QuadraticPerturbation { gamma, .. } => *gamma,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.gamma() == 0.0
    }

    pub fn dimension(&self) -> usize {
        self.singular_values().len()
    }

    /// Spectral norm of the linear part.
    pub fn linear_norm(&self) -> f64 {
        self.singular_values().iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::DiagonalLinear { s } => s * x,
            Self::QuadraticPerturbation { s, gamma } => {
                let mut out = s * x;
                out.zip_mut_with(x, |o, &xi| *o += gamma * xi * xi);
                out
            }
        }
    }

    /// Diagonal of the Jacobian at `x0`.
    pub fn jacobian_diag(&self, x0: &Array1<f64>) -> Array1<f64> {
        match self {
            Self::DiagonalLinear { s } => s.clone(),
            Self::QuadraticPerturbation { s, gamma } => {
                let mut d = s.clone();
                d.zip_mut_with(x0, |dj, &xj| *dj += 2.0 * gamma * xj);
                d
            }
        }
    }

    /// `F'(x0) h`
    pub fn derivative_apply(&self, x0: &Array1<f64>, h: &Array1<f64>) -> Array1<f64> {
        self.jacobian_diag(x0) * h
    }

    /// `F'(x0)^* w`
    pub fn derivative_adjoint_apply(&self, x0: &Array1<f64>, w: &Array1<f64>) -> Array1<f64> {
        self.jacobian_diag(x0) * w
    }
}
