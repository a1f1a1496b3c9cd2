//! Index functions: continuous, strictly increasing maps with value zero at zero.
//!
//! Closed-form families (monomials, logarithmic profiles) evaluate, differentiate,
//! invert and integrate analytically. Derived functions (inverses, antiderivatives,
//! combinations, compositions, the derivative quotient used by the calculus, and
//! user-supplied custom maps) fall back to bisection, adaptive Simpson quadrature
//! and central differences.

mod calculus;
mod spec;

use std::fmt;
use std::sync::Arc;

pub use calculus::{
    build_calculus, build_calculus_with, quasi_additivity_constants, young_gap, CalculusOptions,
    CalculusPath, CalculusTriple, QuasiAdditivity,
};
pub use spec::IndexSpec;

use crate::numeric::{
    adaptive_simpson, bisect_increasing, central_difference, safeguarded_newton, QUAD_ABS_TOL,
    QUAD_REL_TOL,
};
use crate::{Error, Result};

/// Relative slack accepted when an argument lands just past `domain_max`.
const DOMAIN_SLACK: f64 = 1e-12;

/// An index function supplied from outside the closed set of families.
pub trait ScalarIndex: Send + Sync + fmt::Debug {
    fn value(&self, t: f64) -> Result<f64>;

    fn domain_max(&self) -> f64;

    fn slope(&self, t: f64) -> Result<f64> {
        central_difference(|s| self.value(s), t, self.domain_max())
    }

    /// Closed-form or specialised inverse; `None` falls back to bisection.
    fn inverse(&self, _s: f64) -> Option<Result<f64>> {
        None
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `c * t^e`
    Monomial { c: f64, e: f64 },
    /// `C * [log(1/t)]^(-mu)` on `(0, e^(-mu-1)]`
    Logarithmic { mu: f64, c: f64 },
    /// `sum_i lambda_i * eta_i(t)`
    LinearCombination(Vec<(f64, IndexFunction)>),
    /// `outer(inner(t))`
    Composition { outer: Box<IndexFunction>, inner: Box<IndexFunction> },
    /// `int_0^t eta(s) ds`
    Antiderivative(Box<IndexFunction>),
    /// `eta^{-1}(s)` on `[0, eta(domain_max)]`
    Inverse(Box<IndexFunction>),
    /// `[psi' / phi'](phi^{-1}(s))`, the misfit/rate quotient.
    SlopeRatio { psi: Box<IndexFunction>, phi: Box<IndexFunction> },
    Custom(Arc<dyn ScalarIndex>),
}

#[derive(Clone, Debug)]
pub struct IndexFunction {
    family: Family,
    domain_max: f64,
}

impl IndexFunction {
    pub fn monomial(c: f64, e: f64) -> Result<Self> {
        if !(c > 0.0 && e > 0.0 && c.is_finite() && e.is_finite()) {
            return Err(Error::NotIndexFunction(format!("monomial needs c > 0, e > 0 (got c={c}, e={e})")));
        }
        Ok(Self { family: Family::Monomial { c, e }, domain_max: f64::INFINITY })
    }

    /// `t` itself.
    pub fn identity() -> Self {
        Self { family: Family::Monomial { c: 1.0, e: 1.0 }, domain_max: f64::INFINITY }
    }

    /// `t^e`
    pub fn power(e: f64) -> Result<Self> {
        Self::monomial(1.0, e)
    }

    pub fn logarithmic(mu: f64, c: f64) -> Result<Self> {
        if !(mu > 0.0 && c > 0.0 && mu.is_finite() && c.is_finite()) {
            return Err(Error::NotIndexFunction(format!("logarithmic needs mu > 0, C > 0 (got mu={mu}, C={c})")));
        }
        Ok(Self { family: Family::Logarithmic { mu, c }, domain_max: (-mu - 1.0).exp() })
    }

    pub fn linear_combination(terms: Vec<(f64, IndexFunction)>) -> Result<Self> {
        if terms.is_empty() || terms.iter().any(|(w, _)| !(*w >= 0.0)) || terms.iter().all(|(w, _)| *w == 0.0) {
            return Err(Error::NotIndexFunction(
                "linear combination needs non-negative weights, not all zero".into(),
            ));
        }
        let domain_max = terms.iter().map(|(_, f)| f.domain_max).fold(f64::INFINITY, f64::min);
        Ok(Self { family: Family::LinearCombination(terms), domain_max })
    }

    pub fn compose(outer: IndexFunction, inner: IndexFunction) -> Result<Self> {
        if let (Family::Monomial { c: c1, e: e1 }, Family::Monomial { c: c2, e: e2 }) =
            (&outer.family, &inner.family)
        {
            return Self::monomial(c1 * c2.powf(*e1), e1 * e2);
        }
        let domain_max = if outer.domain_max.is_finite() && outer.domain_max < inner.range_max()? {
            inner.invert(outer.domain_max, crate::numeric::INVERT_TOL)?.min(inner.domain_max)
        } else {
            inner.domain_max
        };
        Ok(Self {
            family: Family::Composition { outer: Box::new(outer), inner: Box::new(inner) },
            domain_max,
        })
    }

    /// `int_0^s eta`, in closed form for monomials.
    pub fn antiderivative_of(f: IndexFunction) -> Self {
        if let Family::Monomial { c, e } = f.family {
            return Self { family: Family::Monomial { c: c / (e + 1.0), e: e + 1.0 }, domain_max: f.domain_max };
        }
        let domain_max = f.domain_max;
        Self { family: Family::Antiderivative(Box::new(f)), domain_max }
    }

    /// `eta^{-1}`, in closed form for monomials.
    pub fn inverse_of(f: IndexFunction) -> Result<Self> {
        match f.family {
            Family::Monomial { c, e } => Self::monomial(c.powf(-1.0 / e), 1.0 / e),
            Family::Inverse(inner) => Ok(*inner),
            _ => {
                let domain_max = f.range_max()?;
                Ok(Self { family: Family::Inverse(Box::new(f)), domain_max })
            }
        }
    }

    pub(crate) fn slope_ratio(psi: IndexFunction, phi: IndexFunction) -> Result<Self> {
        let t_max = phi.domain_max.min(psi.domain_max);
        let domain_max = if t_max.is_finite() { phi.evaluate(t_max)? } else { phi.range_max()? };
        Ok(Self { family: Family::SlopeRatio { psi: Box::new(psi), phi: Box::new(phi) }, domain_max })
    }

    pub fn custom(f: Arc<dyn ScalarIndex>) -> Self {
        let domain_max = f.domain_max();
        Self { family: Family::Custom(f), domain_max }
    }

    /// Same function restricted to `[0, min(domain_max, max)]`.
    pub fn restricted(mut self, max: f64) -> Self {
        self.domain_max = self.domain_max.min(max);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain_max(&self) -> f64 {
        self.domain_max
    }

    pub fn is_monomial(&self) -> bool {
        matches!(self.family, Family::Monomial { .. })
    }

    /// Exponent of a monomial, if this is one.
    pub fn monomial_exponent(&self) -> Option<f64> {
        match self.family {
            Family::Monomial { e, .. } => Some(e),
            _ => None,
        }
    }

    /// `sup eta` over the domain (may be infinite).
    pub fn range_max(&self) -> Result<f64> {
        if self.domain_max.is_finite() {
            return self.evaluate(self.domain_max);
        }
        match &self.family {
            Family::LinearCombination(terms) => {
                let mut total = 0.0;
                for (w, f) in terms {
                    if *w > 0.0 {
                        total += w * f.range_max()?;
                    }
                }
                Ok(total)
            }
            Family::Composition { outer, .. } => outer.range_max(),
            Family::Inverse(inner) => Ok(inner.domain_max),
            _ => Ok(f64::INFINITY),
        }
    }

    fn check_domain(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::DomainExceeded { t, max: self.domain_max });
        }
        if t > self.domain_max {
            if t <= self.domain_max * (1.0 + DOMAIN_SLACK) {
                return Ok(self.domain_max);
            }
            return Err(Error::DomainExceeded { t, max: self.domain_max });
        }
        Ok(t)
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let t = self.check_domain(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        match &self.family {
            Family::Monomial { c, e } => Ok(c * t.powf(*e)),
            Family::Logarithmic { mu, c } => Ok(c * (-t.ln()).powf(-mu)),
            Family::LinearCombination(terms) => {
                let mut total = 0.0;
                for (w, f) in terms {
                    if *w > 0.0 {
                        total += w * f.evaluate(t)?;
                    }
                }
                Ok(total)
            }
            Family::Composition { outer, inner } => outer.evaluate(inner.evaluate(t)?),
            Family::Antiderivative(f) => f.antiderivative(t, QUAD_ABS_TOL),
            Family::Inverse(f) => f.invert(t, crate::numeric::INVERT_TOL),
            Family::SlopeRatio { psi, phi } => {
                let u = phi.invert(t, crate::numeric::INVERT_TOL)?;
                if u == 0.0 {
                    return Ok(0.0);
                }
                let dphi = phi.derivative(u)?;
                if !(dphi > 0.0) {
                    return Err(Error::DegenerateDerivative { at: u });
                }
                Ok(psi.derivative(u)? / dphi)
            }
            Family::Custom(f) => f.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let t = self.check_domain(t)?;
        match &self.family {
            Family::Monomial { c, e } => {
                if t == 0.0 {
                    return if *e > 1.0 {
                        Ok(0.0)
                    } else if *e == 1.0 {
                        Ok(*c)
                    } else {
                        Err(Error::NotDifferentiable { t })
                    };
                }
                Ok(c * e * t.powf(e - 1.0))
            }
            Family::Logarithmic { mu, c } => {
                if t == 0.0 {
                    return Err(Error::NotDifferentiable { t });
                }
                let l = -t.ln();
                Ok(c * mu * l.powf(-mu - 1.0) / t)
            }
            Family::LinearCombination(terms) => {
                let mut total = 0.0;
                for (w, f) in terms {
                    if *w > 0.0 {
                        total += w * f.derivative(t)?;
                    }
                }
                Ok(total)
            }
            Family::Composition { outer, inner } => {
                Ok(outer.derivative(inner.evaluate(t)?)? * inner.derivative(t)?)
            }
            Family::Antiderivative(f) => f.evaluate(t),
            Family::Inverse(f) => {
                let u = f.invert(t, crate::numeric::INVERT_TOL)?;
                let slope = f.derivative(u)?;
                if slope > 0.0 && slope.is_finite() {
                    Ok(1.0 / slope)
                } else if slope.is_infinite() {
                    Ok(0.0)
                } else {
                    Err(Error::NotDifferentiable { t })
                }
            }
            Family::SlopeRatio { .. } => {
                if t == 0.0 {
                    return Err(Error::NotDifferentiable { t });
                }
                central_difference(|s| self.evaluate(s), t, self.domain_max)
            }
            Family::Custom(f) => f.slope(t),
        }
    }

    /// Solves `eta(t) = s`. Closed form for monomials and logarithmic
    /// profiles; bracketed search on `[0, domain_max]` otherwise.
    pub fn invert(&self, s: f64, tol: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::OutOfRange { s, max: f64::NAN });
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        match &self.family {
            Family::Monomial { c, e } => return Ok((s / c).powf(1.0 / e)),
            Family::Logarithmic { mu, c } => {
                let top = self.range_max()?;
                if s > top + tol {
                    return Err(Error::OutOfRange { s, max: top });
                }
                if s >= top {
                    return Ok(self.domain_max);
                }
                return Ok((-(c / s).powf(1.0 / mu)).exp());
            }
            Family::Inverse(f) => return f.evaluate(s),
            Family::Custom(g) => {
                if let Some(r) = g.inverse(s) {
                    return r;
                }
            }
            _ => {}
        }
        let hi = if self.domain_max.is_finite() {
            let top = self.evaluate(self.domain_max)?;
            if s > top + tol {
                return Err(Error::OutOfRange { s, max: top });
            }
            if s >= top {
                return Ok(self.domain_max);
            }
            self.domain_max
        } else {
            let mut hi = 1.0_f64;
            let mut steps = 0;
            while self.evaluate(hi)? < s {
                hi *= 2.0;
                steps += 1;
                if steps > 1100 || !hi.is_finite() {
                    return Err(Error::OutOfRange { s, max: f64::INFINITY });
                }
            }
            hi
        };
        match &self.family {
            Family::Antiderivative(f) => {
                safeguarded_newton(|t| self.evaluate(t), |t| f.evaluate(t), s, 0.0, hi)
            }
            _ => bisect_increasing(|t| self.evaluate(t), s, 0.0, hi),
        }
    }

    /// `int_0^s eta(t) dt`; closed form for monomials, adaptive Simpson otherwise
/// (applied to `g` rather than `g^{-1}` for inverses).
    pub fn antiderivative(&self, s: f64, tol: f64) -> Result<f64> {
        let s = self.check_domain(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match &self.family {
            Family::Monomial { c, e } => Ok(c * s.powf(e + 1.0) / (e + 1.0)),
            // Young's equality: int_0^s g^{-1} = s g^{-1}(s) - int_0^{g^{-1}(s)} g,
            // which avoids quadrature over an integrand that is itself an inversion
            Family::Inverse(g) => {
                let u = g.invert(s, crate::numeric::INVERT_TOL * 1e-2)?;
                Ok((s * u - g.antiderivative(u, tol)?).max(0.0))
            }
            _ => adaptive_simpson(&|t| self.evaluate(t), 0.0, s, tol, QUAD_REL_TOL),
        }
    }
}

/// Parses a tagged index-function record, e.g.
/// `{"family":"monomial","c":1.0,"e":0.5}`.
impl std::str::FromStr for IndexFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec: IndexSpec = serde_json::from_str(s)?;
        spec.build()
    }
}
