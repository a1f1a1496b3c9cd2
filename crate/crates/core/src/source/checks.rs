use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use super::distance::RANGE_RATIO;
use super::{rate_function_theorem3, Decay, DistanceFunction, PsiTransform, RateFunction};
use crate::index::IndexFunction;
use crate::problem::{coercivity_check, Coercivity, ProblemInstance};
use crate::{Error, Result};

/// Ratios above this are read as unbounded growth.
const BLOW_UP: f64 = 1e6;
/// Additive slack in the sampled variational inequalities.
pub const VI_SLACK: f64 = 1e-10;
/// Allowed residual of a canonical source representation.
const SOURCE_TOL: f64 = 1e-10;
/// Distances below this count as zero for the range test of the approximate source condition.
const DISTANCE_FLOOR: f64 = 1e-12;
/// Shrink factors used to probe every sample direction towards `x_dagger`.
const RAY_PROBES: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RangeClass {
    /// `xi = A^* w` is solvable with a moderate `|w|`.
    InRange { source_norm: f64 },
    /// `|A^{-*} xi|` exceeds `1e6 |xi|`, the finite-dimensional stand-in for `xi` outside the range.
    OutsideRange { source_norm: f64 },
}

pub fn classify_range(df: &DistanceFunction) -> RangeClass {
    let source_norm = df.exact_source_norm();
    if source_norm > RANGE_RATIO * df.xi_norm() {
        RangeClass::OutsideRange { source_norm }
    } else {
        RangeClass::InRange { source_norm }
    }
}

/// Residual `|xi - F'(x_dagger)^* w|` of a proposed source element.
pub fn source_representation(problem: &ProblemInstance, w: &Array1<f64>) -> f64 {
    let r = &problem.xi - &problem.operator.derivative_adjoint_apply(&problem.x_dagger, w);
    r.dot(&r).sqrt()
}

/// Minimum-norm `w` with `F'(x_dagger)^* w = xi` for the componentwise operators.
pub fn canonical_source(problem: &ProblemInstance) -> Array1<f64> {
    &problem.xi / &problem.operator.jacobian_diag(&problem.x_dagger)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    /// Largest sampled ratio.
    Bounded(f64),
    Unbounded { ratio: f64 },
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Bounded(v) => Some(*v),
            Bound::Unbounded { .. } => None,
        }
    }
}

fn probe_points<'a>(problem: &'a ProblemInstance, samples: &'a [Array1<f64>]) -> impl Iterator<Item = Array1<f64>> + 'a {
    samples.iter().flat_map(move |x| {
        let h = x - &problem.x_dagger;
        RAY_PROBES.iter().map(move |&t| &h * t)
    })
}

fn max_ratio<I: Iterator<Item = Result<Option<f64>>>>(ratios: I) -> Result<Bound> {
    let mut best = 0.0_f64;
    for r in ratios {
        if let Some(v) = r? {
            if !v.is_finite() || v > BLOW_UP {
                return Ok(Bound::Unbounded { ratio: v });
            }
            best = best.max(v);
        }
    }
    Ok(Bound::Bounded(best))
}

/// Sampled constant `C` in `|F'(x_dagger)(x - x_dagger)| <= C sigma(|F(x) - F(x_dagger)|)`.
pub fn structural_check(problem: &ProblemInstance, sigma: &IndexFunction, samples: &[Array1<f64>]) -> Result<Bound> {
    let xd = &problem.x_dagger;
    let fd = &problem.y;
    max_ratio(probe_points(problem, samples).map(|h| {
        if h.iter().all(|v| *v == 0.0) {
            return Ok(None);
        }
        let lin = problem.norm(&problem.operator.derivative_apply(xd, &h));
        let x = xd + &h;
        let rhs = sigma.evaluate(problem.norm(&(problem.operator.apply(&x) - fd)))?;
        Ok(Some(lin / rhs))
    }))
}

/// Sampled `K` in `|F(x) - F(x_dagger) - F'(x_dagger)(x - x_dagger)| <= K |F(x) - F(x_dagger)|^c1 D^c2`.
pub fn degree_check(problem: &ProblemInstance, c1: f64, c2: f64, samples: &[Array1<f64>]) -> Result<Bound> {
    if !((0.0..=1.0).contains(&c1) && (0.0..=1.0).contains(&c2) && c1 + c2 > 0.0 && c1 + c2 <= 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "degree exponents need 0 <= c1, c2 <= 1 and 0 < c1 + c2 <= 1 (got {c1}, {c2})"
        )));
    }
    let xd = &problem.x_dagger;
    let gamma = problem.operator.gamma();
    max_ratio(probe_points(problem, samples).map(|h| {
        if h.iter().all(|v| *v == 0.0) {
            return Ok(None);
        }
        // the Taylor remainder of the componentwise operators is exactly gamma * h_j^2
        let remainder = problem.norm(&h.mapv(|v| gamma * v * v));
        if remainder == 0.0 {
            return Ok(Some(0.0));
        }
        let x = xd + &h;
        let res = problem.norm(&(problem.operator.apply(&x) - &problem.y));
        let rhs = res.powf(c1) * problem.bregman_error(&x).powf(c2);
        Ok(Some(remainder / rhs))
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViRecord {
    pub sample_id: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the inequality fails.
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct ViReport {
    pub beta1: f64,
    pub beta2: f64,
    pub records: Vec<ViRecord>,
    pub violations: usize,
}

/// Sampled check of `<xi, x_dagger - x> <= beta1 D_xi(x, x_dagger) + beta2 phi(|F(x) - F(x_dagger)|)`.
pub fn vi_check(
    problem: &ProblemInstance,
    beta1: f64,
    beta2: f64,
    phi: &IndexFunction,
    samples: &[Array1<f64>],
) -> Result<ViReport> {
    let records = samples
        .par_iter()
        .enumerate()
        .map(|(sample_id, x)| {
            let lhs = problem.xi.dot(&(&problem.x_dagger - x));
            let res = problem.norm(&(problem.operator.apply(x) - &problem.y));
            let rhs = beta1 * problem.bregman_error(x) + beta2 * phi.evaluate(res)?;
            Ok(ViRecord { sample_id, lhs, rhs, slack: rhs - lhs })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = records.iter().filter(|r| r.slack < -VI_SLACK).count();
    Ok(ViReport { beta1, beta2, records, violations })
}

/// Canonical source condition `xi = F'(x_dagger)^* w`: certifies `beta1 = 0`,
/// `beta2 = C |w|` with the structural constant `C` and rate `sigma`.
pub fn vi_theorem2(
    problem: &ProblemInstance,
    sigma: &IndexFunction,
    c: f64,
    w: &Array1<f64>,
    samples: &[Array1<f64>],
) -> Result<ViReport> {
    let residual = source_representation(problem, w);
    if residual > SOURCE_TOL * problem.norm(&problem.xi).max(1.0) {
        return Err(Error::SourceConditionFails { residual });
    }
    vi_check(problem, 0.0, c * problem.norm(w), sigma, samples)
}

#[derive(Clone, Debug)]
pub struct Theorem3Report {
    pub phi: IndexFunction,
    /// `C + c_q^{-q*/q} / q*`
    pub c_hat: f64,
    pub vi: ViReport,
}

/// Approximate source condition: with `R = Psi^{-1}(sigma(t))` the split
/// `xi = A^* w_R + r_R` and Young's inequality give `beta1 = 1/q` and
/// `beta2 = C + c_q^{-q*/q}/q*` for the rate `phi(t) = d(R)^{q*}`.
pub fn vi_theorem3(
    problem: &ProblemInstance,
    sigma: &IndexFunction,
    c: f64,
    q: f64,
    c_q: f64,
    samples: &[Array1<f64>],
) -> Result<Theorem3Report> {
    if !(q > 1.0) || !(c_q > 0.0) {
        return Err(Error::PreconditionViolated(format!("need q > 1 and c_q > 0 (got {q}, {c_q})")));
    }
    match coercivity_check(problem, q, samples)? {
        Coercivity::Estimate(measured) if measured >= c_q * (1.0 - 1e-9) => {}
        Coercivity::Estimate(measured) => {
            return Err(Error::PreconditionViolated(format!("measured coercivity {measured} below c_q = {c_q}")))
        }
        Coercivity::Fail { infimum } => {
            return Err(Error::PreconditionViolated(format!("penalty not {q}-coercive (infimum {infimum:e})")))
        }
    }
    let q_star = PsiTransform::conjugate(q);
    let transform = PsiTransform::new(Decay::Operator(DistanceFunction::from_problem(problem)?), q_star)?;
    let rate = RateFunction { transform: transform.clone(), sigma: sigma.clone() };
    // the split xi = A^* w_R + r_R must be a genuine approximation at every radius used
    let residuals: Vec<f64> = samples.iter().map(|x| problem.norm(&(problem.operator.apply(x) - &problem.y))).collect();
    residuals.par_iter().filter(|t| **t > 0.0).try_for_each(|&t| {
        let r = rate.radius(t)?;
        let d = transform.d(r)?;
        if d <= DISTANCE_FLOOR {
            return Err(Error::PreconditionViolated(format!("d({r:e}) = {d:e}: xi is represented exactly")));
        }
        Ok(())
    })?;
    let phi = rate_function_theorem3(transform, sigma.clone())?;
    let c_hat = c + c_q.powf(-q_star / q) / q_star;
    let vi = vi_check(problem, 1.0 / q, c_hat, &phi, samples)?;
    Ok(Theorem3Report { phi, c_hat, vi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{containment_level, sample_level_set, ForwardOperator, Penalty, VectorSpaceConfig};

    fn linear(n: usize, xi_exp: f64) -> ProblemInstance {
        let s: Vec<f64> = (1..=n).map(|j| 1.0 / j as f64).collect();
        let xd: Array1<f64> = (1..=n).map(|j| (j as f64).powf(-xi_exp)).collect();
        ProblemInstance::diagonal(s, Penalty::HalfSquaredNorm, xd).unwrap()
    }

    fn quad(gamma: f64) -> ProblemInstance {
        let s: Vec<f64> = (1..=5).map(|j| 1.0 / j as f64).collect();
        let op = ForwardOperator::quadratic(s, gamma).unwrap();
        let xd = Array1::from(vec![0.2, -0.1, 0.05, 0.1, -0.05]);
        ProblemInstance::new(VectorSpaceConfig::euclidean(5), op, Penalty::HalfSquaredNorm, xd).unwrap()
    }

    fn samples(p: &ProblemInstance, count: usize) -> Vec<Array1<f64>> {
        let psi = IndexFunction::power(2.0).unwrap();
        sample_level_set(p, &psi, 1.0, containment_level(p, 1.0), count, 11).unwrap()
    }

    #[test]
    fn range_classification() {
        let s: Array1<f64> = (1..=20).map(|j| 10f64.powf(-(j as f64 - 1.0) / 2.0)).collect();
        let xi: Array1<f64> = (1..=20).map(|j| 1.0 / j as f64).collect();
        let df = DistanceFunction::diagonal(s.clone(), xi).unwrap();
        assert!(matches!(classify_range(&df), RangeClass::OutsideRange { .. }));
        let df = DistanceFunction::diagonal(s.clone(), &s * 0.5).unwrap();
        assert!(matches!(classify_range(&df), RangeClass::InRange { .. }));
    }

    #[test]
    fn structural_examples() {
        let p = linear(10, 1.0);
        let xs = samples(&p, 100);
        let c = structural_check(&p, &IndexFunction::identity(), &xs).unwrap().value().unwrap();
        // exact up to the rounding of F(x) - F(x_dagger) on the shortest probes
        assert!((c - 1.0).abs() < 1e-8, "{c}");
        let c = structural_check(&quad(0.05), &IndexFunction::identity(), &samples(&quad(0.05), 100))
            .unwrap()
            .value()
            .unwrap();
        assert!(c > 0.9 && c < 1.5, "{c}");
        let sq = structural_check(&p, &IndexFunction::power(2.0).unwrap(), &xs).unwrap();
        assert!(matches!(sq, Bound::Unbounded { .. }));
    }

    #[test]
    fn degree_examples() {
        let p = linear(5, 1.0);
        assert_eq!(degree_check(&p, 0.5, 0.5, &samples(&p, 50)).unwrap(), Bound::Bounded(0.0));
        let gamma = 0.1;
        let q = quad(gamma);
        let k = degree_check(&q, 0.0, 1.0, &samples(&q, 200)).unwrap().value().unwrap();
        assert!(k <= 2.0 * gamma * (1.0 + 1e-12) && k > 0.5 * gamma, "{k}");
        assert!(matches!(degree_check(&q, 0.0, 0.0, &[]), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn theorem2_with_negative_control() {
        let p = linear(20, 1.5);
        let w = canonical_source(&p);
        assert!(source_representation(&p, &w) < 1e-14);
        let mut xs = samples(&p, 400);
        // adversarial directions with A h parallel to w make the inequality sharp
        let h: Array1<f64> = &w / p.operator.singular_values();
        for t in [1e-3, 1e-2, 1e-1] {
            xs.push(&p.x_dagger - &(&h * (t / p.norm(&h))));
        }
        let rep = vi_theorem2(&p, &IndexFunction::identity(), 1.0, &w, &xs).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.beta1, 0.0);
        assert_eq!(rep.records[0].lhs, 0.0);
        assert_eq!(rep.records[0].rhs, 0.0);
        let halved = vi_check(&p, 0.0, rep.beta2 / 2.0, &IndexFunction::identity(), &xs).unwrap();
        assert!(halved.violations > 0);
        let bad_w = &w * 0.5;
        assert!(matches!(
            vi_theorem2(&p, &IndexFunction::identity(), 1.0, &bad_w, &xs),
            Err(Error::SourceConditionFails { .. })
        ));
    }

    #[test]
    fn theorem3_constants() {
        let s: Vec<f64> = (1..=50).map(|j| 1.0 / j as f64).collect();
        let xd: Array1<f64> = (1..=50).map(|j| (j as f64).powf(-0.6)).collect();
        let p = ProblemInstance::diagonal(s, Penalty::HalfSquaredNorm, xd).unwrap();
        let xs = samples(&p, 100);
        let rep = vi_theorem3(&p, &IndexFunction::identity(), 1.0, 2.0, 0.5, &xs).unwrap();
        assert_eq!(rep.vi.beta1, 0.5);
        assert!((rep.c_hat - 2.0).abs() < 1e-15);
        assert_eq!(rep.vi.violations, 0);
        assert_eq!(rep.vi.records[0].slack, 0.0);
    }

    #[test]
    fn theorem3_rejects_non_coercive_penalty() {
        let s: Vec<f64> = (1..=5).map(|j| 1.0 / j as f64).collect();
        let xd: Array1<f64> = (1..=5).map(|j| (j as f64).powf(-0.6)).collect();
        let p = ProblemInstance::diagonal(s, Penalty::PowerNorm(4.0), xd).unwrap();
        let xs = samples(&p, 20);
        assert!(matches!(
            vi_theorem3(&p, &IndexFunction::identity(), 1.0, 2.0, 0.5, &xs),
            Err(Error::PreconditionViolated(_))
        ));
    }
}
