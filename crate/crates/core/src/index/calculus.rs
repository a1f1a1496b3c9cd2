//! The misfit/rate calculus: from a misfit `psi` and a rate `phi` build
//! `f = [psi'/phi'] o phi^{-1}`, `H = int f` and `G = int f^{-1}`.

use super::{Family, IndexFunction};
use crate::numeric::{log_space, QUAD_ABS_TOL};
use crate::{Error, Result};

/// Number of log-spaced points used by the sampled shape checks.
const SHAPE_SAMPLES: usize = 64;
/// Relative step of the second-difference stencil.
const SHAPE_STEP: f64 = 1e-2;
/// Second differences below this (relative to the function value) count as zero.
const SHAPE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CalculusPath {
    /// Closed forms when both inputs are monomials, numeric otherwise.
    #[default]
    Auto,
    /// Always build `f`, `H`, `G` from quadrature and inversion.
    Numeric,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CalculusOptions {
    pub path: CalculusPath,
    /// Upper end of the window used for the shape checks (default 1, clipped to the domains).
    pub window_max: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CalculusTriple {
    pub psi: IndexFunction,
    pub phi: IndexFunction,
    pub f: IndexFunction,
    pub h: IndexFunction,
    pub g: IndexFunction,
    /// Which construction produced `f`, `H`, `G`.
    pub path: CalculusPath,
    /// False when `psi` failed the strict-convexity sample test but `f` was
    /// still found to be increasing, which is admissible.
    pub psi_strictly_convex: bool,
}

pub fn build_calculus(psi: IndexFunction, phi: IndexFunction) -> Result<CalculusTriple> {
    build_calculus_with(psi, phi, CalculusOptions::default())
}

pub fn build_calculus_with(psi: IndexFunction, phi: IndexFunction, options: CalculusOptions) -> Result<CalculusTriple> {
    let window = options
        .window_max
        .unwrap_or(1.0)
        .min(psi.domain_max() / (1.0 + 2.0 * SHAPE_STEP))
        .min(phi.domain_max() / (1.0 + 2.0 * SHAPE_STEP));
    let grid = log_space(window * 1e-6, window, SHAPE_SAMPLES);

    for &t in &grid {
        if !(phi.derivative(t)? > 0.0) {
            return Err(Error::DegenerateDerivative { at: t });
        }
    }
    for &t in &grid {
        if second_difference(&phi, t)? > SHAPE_FLOOR * phi.evaluate(t)? {
            return Err(Error::NotConcave { at: t });
        }
    }
    let convex_failure = grid
        .iter()
        .map(|&t| Ok((t, second_difference(&psi, t)? <= SHAPE_FLOOR * psi.evaluate(t)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .find(|(_, bad)| *bad)
        .map(|(t, _)| t);

    let analytic = match (options.path, psi.family(), phi.family()) {
        (CalculusPath::Auto, Family::Monomial { c: c1, e: p }, Family::Monomial { c: c2, e: kappa }) => {
            Some((*c1, *p, *c2, *kappa))
        }
        _ => None,
    };

    let (f, path) = match analytic {
        Some((c1, p, c2, kappa)) => {
            if p <= kappa {
                return Err(Error::NotIndexFunction(format!(
                    "f is not increasing for psi exponent {p} <= phi exponent {kappa}"
                )));
            }
            let expo = (p - kappa) / kappa;
            let coeff = c1 * p / (c2 * kappa) * c2.powf(-expo);
            (IndexFunction::monomial(coeff, expo)?, CalculusPath::Auto)
        }
        None => (IndexFunction::slope_ratio(psi.clone(), phi.clone())?, CalculusPath::Numeric),
    };

    // f must itself be an index function on the image of the window.
    let mut prev = 0.0;
    for &t in &grid {
        let s = phi.evaluate(t)?;
        let v = f.evaluate(s)?;
        if !(v > prev) || !v.is_finite() {
            return match convex_failure {
                Some(at) => Err(Error::NotConvex { at }),
                None => Err(Error::NotIndexFunction(format!("derived f not increasing near s={s}"))),
            };
        }
        prev = v;
    }

    let h = IndexFunction::antiderivative_of(f.clone());
    let g = IndexFunction::antiderivative_of(IndexFunction::inverse_of(f.clone())?);
    Ok(CalculusTriple { psi, phi, f, h, g, path, psi_strictly_convex: convex_failure.is_none() })
}

/// Symmetric second difference with relative step, pulled inwards near the domain end.
fn second_difference(eta: &IndexFunction, t: f64) -> Result<f64> {
    let h = SHAPE_STEP * t;
    Ok(eta.evaluate(t + h)? - 2.0 * eta.evaluate(t)? + eta.evaluate(t - h)?)
}

impl CalculusTriple {
    /// `f(phi(delta))`, computed as `psi'(delta) / phi'(delta)` without the round trip through `phi^{-1}`.
    pub fn f_of_phi(&self, delta: f64) -> Result<f64> {
        if delta == 0.0 {
            return Ok(0.0);
        }
        if self.path == CalculusPath::Auto {
            return self.f.evaluate(self.phi.evaluate(delta)?);
        }
        let dphi = self.phi.derivative(delta)?;
        if !(dphi > 0.0) {
            return Err(Error::DegenerateDerivative { at: delta });
        }
        Ok(self.psi.derivative(delta)? / dphi)
    }

    /// `G(f(phi(delta)))` through Young's equality `G(f(u)) = u f(u) - H(u)` with
    /// `H(phi(delta)) = psi(delta)`; avoids nested quadrature.
    pub fn g_at_f_of_phi(&self, delta: f64) -> Result<f64> {
        let u = self.phi.evaluate(delta)?;
        Ok((u * self.f_of_phi(delta)? - self.psi.evaluate(delta)?).max(0.0))
    }

    /// `G^{-1}(psi(delta))`, by inversion of the quadrature-based `G`.
    pub fn g_inverse_of_psi(&self, delta: f64) -> Result<f64> {
        self.g.invert(self.psi.evaluate(delta)?, crate::numeric::INVERT_TOL * 1e-2)
    }
}

/// `int_0^a f + int_0^b f^{-1} - a b`, non-negative by the generalized Young inequality.
pub fn young_gap(f: &IndexFunction, a: f64, b: f64) -> Result<f64> {
    let inv = IndexFunction::inverse_of(f.clone())?;
    Ok(f.antiderivative(a, QUAD_ABS_TOL * 1e-2)? + inv.antiderivative(b, QUAD_ABS_TOL * 1e-2)? - a * b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuasiAdditivity {
    Verified { a: f64, b: f64 },
    Unverified,
}

const QA_CANDIDATES: [f64; 12] = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 16.0, 32.0, 64.0, 128.0];

/// Constants with `psi(u+v) <= a psi(u) + b psi(v)`.
pub fn quasi_additivity_constants(psi: &IndexFunction) -> QuasiAdditivity {
    if let Family::Monomial { e, .. } = psi.family() {
        let k = if *e >= 1.0 { 2f64.powf(e - 1.0) } else { 1.0 };
        return QuasiAdditivity::Verified { a: k, b: k };
    }
    let top = psi.domain_max().min(1.0) / 2.0;
    let pts = log_space(top * 1e-6, top, 40);
    let holds = |k: f64| -> bool {
        pts.iter().all(|&u| {
            pts.iter().all(|&v| match (psi.evaluate(u + v), psi.evaluate(u), psi.evaluate(v)) {
                (Ok(s), Ok(pu), Ok(pv)) => s <= k * (pu + pv) * (1.0 + 1e-12),
                _ => false,
            })
        })
    };
    QA_CANDIDATES
        .iter()
        .find(|&&k| holds(k))
        .map_or(QuasiAdditivity::Unverified, |&k| QuasiAdditivity::Verified { a: k, b: k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mono(c: f64, e: f64) -> IndexFunction {
        IndexFunction::monomial(c, e).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn monomial_pair_closed_forms() {
        let tri = build_calculus(mono(1.0, 2.0), mono(1.0, 0.5)).unwrap();
        for t in [0.1, 0.5, 2.0] {
            assert!(rel(tri.f.evaluate(t).unwrap(), 4.0 * t.powi(3)) < 1e-14);
        }
        let tri = build_calculus(mono(1.0, 2.0), mono(1.0, 1.0)).unwrap();
        for t in [0.1, 0.5, 2.0] {
            assert!(rel(tri.f.evaluate(t).unwrap(), 2.0 * t) < 1e-14);
            assert!(rel(tri.h.evaluate(t).unwrap(), t * t) < 1e-14);
            assert!(rel(tri.g.evaluate(t).unwrap(), t * t / 4.0) < 1e-14);
        }
    }

    #[test]
    fn numeric_path_matches_closed_form() {
        let opts = CalculusOptions { path: CalculusPath::Numeric, window_max: None };
        let tri = build_calculus_with(mono(1.0, 2.0), mono(1.0, 1.0), opts).unwrap();
        assert_eq!(tri.path, CalculusPath::Numeric);
        for t in [0.1, 0.5, 0.9] {
            assert!(rel(tri.f.evaluate(t).unwrap(), 2.0 * t) < 1e-8);
            assert!(rel(tri.h.evaluate(t).unwrap(), t * t) < 1e-8);
            assert!(rel(tri.g.evaluate(t).unwrap(), t * t / 4.0) < 1e-7);
        }
    }

    #[test]
    fn log_pair_f_matches_difference_quotient() {
        let psi = mono(1.0, 2.0);
        let phi = IndexFunction::logarithmic(1.0, 1.0).unwrap();
        let tri = build_calculus(psi.clone(), phi.clone()).unwrap();
        // oracle: derivative of psi o phi^{-1}
        let comp = |s: f64| psi.evaluate(phi.invert(s, 1e-14).unwrap()).unwrap();
        for s in [0.1, 0.2, 0.3, 0.4] {
            let h = 1e-6 * s;
            let fd = (comp(s + h) - comp(s - h)) / (2.0 * h);
            assert!(rel(tri.f.evaluate(s).unwrap(), fd) < 1e-4, "s={s}");
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            build_calculus(mono(1.0, 2.0), mono(1.0, 2.0)),
            Err(Error::NotConcave { .. })
        ));
        let concave_psi = IndexFunction::logarithmic(1.0, 1.0).unwrap();
        assert!(matches!(build_calculus(concave_psi, mono(1.0, 1.0)), Err(Error::NotConvex { .. })));
    }

    #[test]
    fn accepts_non_strict_psi_with_increasing_f() {
        let tri = build_calculus(mono(1.0, 1.0), mono(1.0, 0.5)).unwrap();
        assert!(!tri.psi_strictly_convex);
        assert!(rel(tri.f.evaluate(0.3).unwrap(), 0.6) < 1e-14);
    }

    #[test]
    fn young_gap_examples() {
        assert!(young_gap(&mono(1.0, 1.0), 1.0, 1.0).unwrap().abs() < 1e-15);
        assert!((young_gap(&mono(2.0, 1.0), 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(young_gap(&mono(2.0, 1.0), 1.0, 2.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn young_identity_for_g() {
        let tri = build_calculus(mono(1.0, 2.0), IndexFunction::logarithmic(1.0, 1.0).unwrap()).unwrap();
        for delta in [1e-4, 1e-3, 1e-2, 0.1] {
            let fu = tri.f_of_phi(delta).unwrap();
            let g = tri.g.evaluate(fu).unwrap();
            let young = tri.g_at_f_of_phi(delta).unwrap();
            assert!((g - young).abs() <= 1e-9 + 1e-6 * young, "{g} vs {young}");
            // direct quadrature of the inverse as an independent oracle
            let inv = IndexFunction::inverse_of(tri.f.clone()).unwrap();
            let quad = crate::numeric::adaptive_simpson(&|y| inv.evaluate(y), 0.0, fu, 1e-12, 1e-10).unwrap();
            assert!((quad - young).abs() <= 1e-9 + 1e-6 * young, "{quad} vs {young}");
        }
    }

    #[test]
    fn quasi_additivity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (p, k) in [(2.0, 2.0), (1.0, 1.0), (3.0, 4.0)] {
            assert_eq!(quasi_additivity_constants(&mono(1.0, p)), QuasiAdditivity::Verified { a: k, b: k });
            for _ in 0..10_000 {
                let (u, v): (f64, f64) = (rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0);
                assert!((u + v).powf(p) <= k * (u.powf(p) + v.powf(p)) * (1.0 + 1e-12));
            }
        }
        let log = IndexFunction::logarithmic(1.0, 1.0).unwrap();
        assert!(matches!(quasi_additivity_constants(&log), QuasiAdditivity::Verified { .. }));
    }

    proptest! {
        #[test]
        fn young_inequality(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            for f in [mono(1.0, 1.0), mono(2.0, 1.0), mono(4.0, 3.0)] {
                prop_assert!(young_gap(&f, a, b).unwrap() >= -1e-9);
            }
        }

        #[test]
        fn classical_young(a in 0.0f64..10.0, b in 0.0f64..10.0, idx in 0usize..3) {
            let p1 = [2.0, 1.5, 4.0][idx];
            let p2 = p1 / (p1 - 1.0);
            let ab = a * b;
            prop_assert!(ab <= (a.powf(p1) / p1 + b.powf(p2) / p2) * (1.0 + 1e-12) + 1e-12);
            let variant = a.powf(p1) + b.powf(p2) / (p1.powf(p2 / p1) * p2);
            prop_assert!(ab <= variant * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn monomial_f_is_index(p in 1.1f64..5.0, kappa in 0.1f64..1.0) {
            let tri = build_calculus(mono(1.0, p), mono(1.0, kappa)).unwrap();
            prop_assert_eq!(tri.f.evaluate(0.0).unwrap(), 0.0);
            let mut prev = 0.0;
            for i in 1..=20 {
                let v = tri.f.evaluate(i as f64 / 10.0).unwrap();
                prop_assert!(v > prev);
                prev = v;
            }
        }
    }
}
