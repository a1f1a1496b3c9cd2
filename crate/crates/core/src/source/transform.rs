use std::sync::Arc;

use super::DistanceFunction;
use crate::index::{IndexFunction, ScalarIndex};
use crate::numeric::log_space;
use crate::{Error, Result};

/// Bracket expansions allowed before inversion of `Psi` gives up.
const MAX_DOUBLINGS: usize = 200;

/// Source of the decay profile `d(R)`.
#[derive(Clone, Debug)]
pub enum Decay {
    /// Distance function of an operator.
    Operator(DistanceFunction),
    /// `d(R) = [log R]^(-nu)` for `R > r_bar >= 1`.
    Logarithmic { nu: f64, r_bar: f64 },
}

/// `Psi(R) = d(R)^{q*} / R`.
#[derive(Clone, Debug)]
pub struct PsiTransform {
    pub decay: Decay,
    pub q_star: f64,
}

impl PsiTransform {
    pub fn new(decay: Decay, q_star: f64) -> Result<Self> {
        if !(q_star > 1.0 && q_star.is_finite()) {
            return Err(Error::InvalidConfig(format!("conjugate exponent must exceed 1, got {q_star}")));
        }
        if let Decay::Logarithmic { nu, r_bar } = decay {
            if !(nu > 0.0) || !(r_bar >= 1.0) {
                return Err(Error::InvalidConfig(format!("log decay needs nu > 0, r_bar >= 1 (got {nu}, {r_bar})")));
            }
        }
        Ok(Self { decay, q_star })
    }

    /// Conjugate exponent of `q`.
    pub fn conjugate(q: f64) -> f64 {
        q / (q - 1.0)
    }

    /// Left end of the admissible radii.
    pub fn r_bar(&self) -> f64 {
        match self.decay {
            Decay::Operator(_) => 0.0,
            Decay::Logarithmic { r_bar, .. } => r_bar,
        }
    }

    pub fn d(&self, r: f64) -> Result<f64> {
        match &self.decay {
            Decay::Operator(df) => df.value_at(r),
            Decay::Logarithmic { nu, r_bar } => {
                if r <= *r_bar {
                    return Err(Error::DomainExceeded { t: r, max: f64::INFINITY });
                }
                Ok(r.ln().powf(-nu))
            }
        }
    }

    pub fn d_slope(&self, r: f64) -> Result<f64> {
        match &self.decay {
            Decay::Operator(df) => df.slope_at(r),
            Decay::Logarithmic { nu, .. } => Ok(-nu * r.ln().powf(-nu - 1.0) / r),
        }
    }

    pub fn psi(&self, r: f64) -> Result<f64> {
        if r.is_infinite() {
            return Ok(0.0);
        }
        if r <= self.r_bar() {
            return Ok(f64::INFINITY);
        }
        Ok(self.d(r)?.powf(self.q_star) / r)
    }

    fn radius_of(&self, u: f64) -> f64 {
        self.r_bar() + u.exp()
    }

    /// Solves `Psi(R) = t` by bisection in `u = log(R - r_bar)` on an expanding bracket.
    /// Diagonal operators are inverted along the multiplier path instead, where
    /// `R` and `d` are explicit and `Psi` is increasing in `log lambda`.
    pub fn psi_inverse(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::BracketFailure { target: t });
        }
        if let Decay::Operator(df) = &self.decay {
            if df.multiplier_point(1.0).is_some() {
                return self.psi_inverse_multiplier(df, t);
            }
        }
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut width = 2.0_f64;
        let mut k = 0;
        while self.psi(self.radius_of(lo))? < t {
            lo -= width;
            width *= 2.0;
            k += 1;
            if k > MAX_DOUBLINGS {
                return Err(Error::BracketFailure { target: t });
            }
        }
        let mut width = 2.0_f64;
        let mut k = 0;
        while self.psi(self.radius_of(hi))? > t {
            hi += width;
            width *= 2.0;
            k += 1;
            if k > MAX_DOUBLINGS {
                return Err(Error::BracketFailure { target: t });
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if self.psi(self.radius_of(mid))? > t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (rl, rh) = (self.radius_of(lo), self.radius_of(hi));
        let (pl, ph) = (self.psi(rl)?, self.psi(rh)?);
        Ok(if (pl - t).abs() <= (ph - t).abs() { rl } else { rh })
    }

    fn psi_inverse_multiplier(&self, df: &DistanceFunction, t: f64) -> Result<f64> {
        let q = self.q_star;
        let point = |u: f64| df.multiplier_point(u.exp()).expect("diagonal model");
        let psi = |u: f64| {
            let (r, d) = point(u);
            if r == 0.0 {
                f64::INFINITY
            } else {
                d.powf(q) / r
            }
        };
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut k = 0;
        while psi(lo) >= t {
            lo = 2.0 * lo - 1.0;
            k += 1;
            if k > MAX_DOUBLINGS || lo < f64::MIN_POSITIVE.ln() {
                return Err(Error::BracketFailure { target: t });
            }
        }
        let mut k = 0;
        while psi(hi) <= t {
            hi = 2.0 * hi + 1.0;
            k += 1;
            if k > MAX_DOUBLINGS || hi > f64::MAX.ln() {
                return Err(Error::BracketFailure { target: t });
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if psi(mid) > t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (pl, ph) = (psi(lo), psi(hi));
        Ok(if (pl - t).abs() <= (ph - t).abs() { point(lo).0 } else { point(hi).0 })
    }

    /// Radius with `d(R) = v`, or `None` when `v` is not attained.
    pub fn d_inverse(&self, v: f64) -> Option<Result<f64>> {
        if !(v > 0.0) {
            return None;
        }
        match &self.decay {
            Decay::Logarithmic { nu, r_bar } => {
                let r = v.powf(-1.0 / nu).exp();
                (r > *r_bar && r.is_finite()).then_some(Ok(r))
            }
            Decay::Operator(df) => {
                if v >= df.xi_norm() {
                    return None;
                }
                if let Some(r) = df.radius_at_distance(v) {
                    return Some(Ok(r));
                }
                let d = |u: f64| df.value_at(u.exp());
                let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
                for _ in 0..MAX_DOUBLINGS {
                    match d(lo) {
                        Ok(x) if x < v => lo = 2.0 * lo - 1.0,
                        Ok(_) => break,
                        Err(e) => return Some(Err(e)),
                    }
                }
                for _ in 0..MAX_DOUBLINGS {
                    match d(hi) {
                        Ok(x) if x > v => hi = 2.0 * hi + 1.0,
                        Ok(_) => break,
                        Err(e) => return Some(Err(e)),
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if !(mid > lo && mid < hi) {
                        break;
                    }
                    match d(mid) {
                        Ok(x) if x > v => lo = mid,
                        Ok(_) => hi = mid,
                        Err(e) => return Some(Err(e)),
                    }
                }
                Some(Ok((0.5 * (lo + hi)).exp()))
            }
        }
    }

    /// `Psi'(R)`
    pub fn psi_slope(&self, r: f64) -> Result<f64> {
        let d = self.d(r)?;
        let q = self.q_star;
        Ok((q * d.powf(q - 1.0) * self.d_slope(r)? * r - d.powf(q)) / (r * r))
    }
}

/// `phi(t) = d(Psi^{-1}(sigma(t)))^{q*}`.
#[derive(Debug)]
pub struct RateFunction {
    pub transform: PsiTransform,
    pub sigma: IndexFunction,
}

impl RateFunction {
    /// `Psi^{-1}(sigma(t))`
    pub fn radius(&self, t: f64) -> Result<f64> {
        self.transform.psi_inverse(self.sigma.evaluate(t)?)
    }
}

impl ScalarIndex for RateFunction {
    fn value(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let r = self.radius(t)?;
        Ok(self.transform.d(r)?.powf(self.transform.q_star))
    }

    fn domain_max(&self) -> f64 {
        self.sigma.domain_max()
    }

    /// Chain rule through the implicit radius `Psi(R(t)) = sigma(t)`.
    fn slope(&self, t: f64) -> Result<f64> {
        let r = self.radius(t)?;
        let q = self.transform.q_star;
        let d = self.transform.d(r)?;
        let dr = self.sigma.derivative(t)? / self.transform.psi_slope(r)?;
        Ok(q * d.powf(q - 1.0) * self.transform.d_slope(r)? * dr)
    }

    /// `sigma^{-1}(Psi(d^{-1}(s^{1/q*})))`
    fn inverse(&self, s: f64) -> Option<Result<f64>> {
        let r = match self.transform.d_inverse(s.powf(1.0 / self.transform.q_star))? {
            Ok(r) => r,
            Err(e) => return Some(Err(e)),
        };
        Some(self.transform.psi(r).and_then(|p| self.sigma.invert(p, crate::numeric::INVERT_TOL)))
    }
}

/// Builds the rate function and validates it by sampled monotonicity.
pub fn rate_function_theorem3(transform: PsiTransform, sigma: IndexFunction) -> Result<IndexFunction> {
    let rate = Arc::new(RateFunction { transform, sigma });
    let top = rate.sigma.domain_max().min(1.0);
    let mut prev = 0.0;
    for t in log_space(top * 1e-12, top, 48) {
        let v = rate.value(t)?;
        if !(v > prev) {
            return Err(Error::NotIndexFunction(format!("rate function not increasing near t={t}")));
        }
        prev = v;
    }
    Ok(IndexFunction::custom(rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn log_transform() -> PsiTransform {
        PsiTransform::new(Decay::Logarithmic { nu: 1.0, r_bar: 1.0 }, 2.0).unwrap()
    }

    fn operator_transform() -> PsiTransform {
        let s: Array1<f64> = (1..=50).map(|j| 1.0 / j as f64).collect();
        let xi: Array1<f64> = (1..=50).map(|j| (j as f64).powf(-0.6)).collect();
        PsiTransform::new(Decay::Operator(DistanceFunction::diagonal(s, xi).unwrap()), 2.0).unwrap()
    }

    #[test]
    fn inverse_of_known_point() {
        let pt = log_transform();
        let r = 4f64.exp();
        let back = pt.psi_inverse(pt.psi(r).unwrap()).unwrap();
        assert!((back - r).abs() <= 1e-10 * r);
    }

    #[test]
    fn bracket_failure_on_bad_target() {
        assert!(matches!(log_transform().psi_inverse(0.0), Err(Error::BracketFailure { .. })));
    }

    #[test]
    fn quotient_identity() {
        for pt in [log_transform(), operator_transform()] {
            let phi = rate_function_theorem3(pt.clone(), IndexFunction::identity()).unwrap();
            let rate = RateFunction { transform: pt, sigma: IndexFunction::identity() };
            let mut prev = f64::INFINITY;
            for t in log_space(1e-10, 1e-1, 30).into_iter().rev() {
                let q = t / phi.evaluate(t).unwrap();
                let expected = 1.0 / rate.radius(t).unwrap();
                assert!((q - expected).abs() <= 1e-8 * expected);
                assert!(q < prev);
                prev = q;
            }
        }
    }

    #[test]
    fn analytic_slope_matches_difference_quotient() {
        for pt in [log_transform(), operator_transform()] {
            let phi = rate_function_theorem3(pt, IndexFunction::identity()).unwrap();
            for t in [1e-8, 1e-5, 1e-2] {
                let h = 1e-4 * t;
                let fd = (phi.evaluate(t + h).unwrap() - phi.evaluate(t - h).unwrap()) / (2.0 * h);
                let an = phi.derivative(t).unwrap();
                assert!((fd - an).abs() <= 1e-4 * an, "t={t}: {fd} vs {an}");
            }
        }
    }

    proptest! {
        #[test]
        fn psi_decreasing(lr in -6.0f64..6.0, step in 0.01f64..2.0) {
            let pt = operator_transform();
            let (r1, r2) = (10f64.powf(lr), 10f64.powf(lr + step));
            prop_assert!(pt.psi(r1).unwrap() > pt.psi(r2).unwrap());
            let lt = log_transform();
            let (r1, r2) = (1.0 + 10f64.powf(lr), 1.0 + 10f64.powf(lr + step));
            prop_assert!(lt.psi(r1).unwrap() > lt.psi(r2).unwrap());
        }

        #[test]
        fn psi_inverse_round_trip_and_order(lt in -12.0f64..3.0, gap in 0.01f64..1.0) {
            for pt in [log_transform(), operator_transform()] {
                let (t1, t2) = (10f64.powf(lt), 10f64.powf(lt + gap));
                let (r1, r2) = (pt.psi_inverse(t1).unwrap(), pt.psi_inverse(t2).unwrap());
                prop_assert!((pt.psi(r1).unwrap() - t1).abs() <= 1e-9 * t1);
                prop_assert!(r1 > r2);
            }
        }
    }

    #[test]
    fn rate_inverse_round_trip() {
        for pt in [log_transform(), operator_transform()] {
            let phi = rate_function_theorem3(pt, IndexFunction::identity()).unwrap();
            for t in [1e-10, 1e-6, 1e-3, 1e-1] {
                let back = phi.invert(phi.evaluate(t).unwrap(), 1e-12).unwrap();
                assert!((back - t).abs() <= 1e-7 * t, "{back} vs {t}");
            }
        }
    }

    #[test]
    fn psi_limits() {
        let pt = operator_transform();
        assert!(pt.psi(1e-6).unwrap() > 1e5);
        assert!(pt.psi(1e6).unwrap() < 1e-5);
        let lt = log_transform();
        assert!(lt.psi(1.0 + 1e-6).unwrap() > 1e5);
        assert!(lt.psi(1e12).unwrap() < 1e-12);
    }
}
