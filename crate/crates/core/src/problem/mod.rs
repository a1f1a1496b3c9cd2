//! Finite-dimensional problem instances `F(x) = y` on `R^n` with smooth convex
//! penalties, Bregman distances, tight noise and level sets of the noise-free
//! Tikhonov functional.

mod operator;
mod penalty;
mod spec;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use operator::ForwardOperator;
pub use penalty::Penalty;
pub use spec::{OperatorSpec, PenaltySpec, ProblemSpec, SingularValueSpec, SolutionSpec};

use crate::index::IndexFunction;
use crate::numeric::lp_norm;
use crate::{Error, Result};

/// Allowed distance between a supplied subgradient and the penalty gradient.
const GRADIENT_MATCH_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorSpaceConfig {
    pub dimension: usize,
    /// Exponent `p` of the ℓ^p norm on both `X` and `Y`.
    pub norm_exponent: f64,
}

impl VectorSpaceConfig {
    pub fn euclidean(dimension: usize) -> Self {
        Self { dimension, norm_exponent: 2.0 }
    }

    pub fn norm(&self, v: &Array1<f64>) -> f64 {
        lp_norm(v.view(), self.norm_exponent)
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub space: VectorSpaceConfig,
    pub operator: ForwardOperator,
    pub penalty: Penalty,
    pub x_dagger: Array1<f64>,
    pub y: Array1<f64>,
    pub xi: Array1<f64>,
}

impl ProblemInstance {
    pub fn new(
        space: VectorSpaceConfig,
        operator: ForwardOperator,
        penalty: Penalty,
        x_dagger: Array1<f64>,
    ) -> Result<Self> {
        if space.dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if !(space.norm_exponent >= 1.0) {
            return Err(Error::InvalidConfig(format!("norm exponent must be >= 1, got {}", space.norm_exponent)));
        }
        if operator.dimension() != space.dimension || x_dagger.len() != space.dimension {
            return Err(Error::InvalidConfig(format!(
                "dimension mismatch: space {}, operator {}, x_dagger {}",
                space.dimension,
                operator.dimension(),
                x_dagger.len()
            )));
        }
        let y = operator.apply(&x_dagger);
        let xi = penalty.gradient(&x_dagger);
        Ok(Self { space, operator, penalty, x_dagger, y, xi })
    }

    /// Euclidean instance with a diagonal linear operator.
    pub fn diagonal(s: Vec<f64>, penalty: Penalty, x_dagger: Array1<f64>) -> Result<Self> {
        let n = s.len();
        Self::new(VectorSpaceConfig::euclidean(n), ForwardOperator::diagonal(s)?, penalty, x_dagger)
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn norm(&self, v: &Array1<f64>) -> f64 {
        self.space.norm(v)
    }

    pub fn residual(&self, x: &Array1<f64>, data: &Array1<f64>) -> Array1<f64> {
        self.operator.apply(x) - data
    }

    /// `D_xi(x, x_dagger)` with the instance's own subgradient.
    pub fn bregman_error(&self, x: &Array1<f64>) -> f64 {
        self.penalty.bregman_exact(x, &self.x_dagger)
    }
}

/// `D_xi(x_tilde, x) = Omega(x_tilde) - Omega(x) - <xi, x_tilde - x>`.
pub fn bregman(penalty: &Penalty, x_tilde: &Array1<f64>, x: &Array1<f64>, xi: &Array1<f64>) -> Result<f64> {
    let grad = penalty.gradient(x);
    let mismatch = (&grad - xi).dot(&(&grad - xi)).sqrt();
    if mismatch > GRADIENT_MATCH_TOL {
        return Err(Error::GradientMismatch { mismatch });
    }
    // exact split: D with the true gradient, plus the (tiny) subgradient correction
    let correction = (&grad - xi).dot(&(x_tilde - x));
    Ok((penalty.bregman_exact(x_tilde, x) + correction).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coercivity {
    /// Infimum of `D / |x - x_dagger|^q` over the probed points.
    Estimate(f64),
    /// The infimum fell below the floor.
    Fail { infimum: f64 },
}

const COERCIVITY_FLOOR: f64 = 1e-12;
/// Shrink factors applied to every sample direction to probe the behaviour near `x_dagger`.
const COERCIVITY_PROBES: [f64; 9] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// Measures the constant `c_q` in `D_xi(x, x_dagger) >= c_q |x - x_dagger|^q`.
///
/// Every sample is probed along the segment towards `x_dagger` as well, since
/// failures of local coercivity show up as `x -> x_dagger`.
pub fn coercivity_check(problem: &ProblemInstance, q: f64, samples: &[Array1<f64>]) -> Result<Coercivity> {
    if !(q >= 2.0) {
        return Err(Error::PreconditionViolated(format!("coercivity exponent must be >= 2, got {q}")));
    }
    let mut inf = f64::INFINITY;
    for x in samples {
        let h = x - &problem.x_dagger;
        if problem.norm(&h) == 0.0 {
            continue;
        }
        for t in COERCIVITY_PROBES {
            let xt = &problem.x_dagger + &(&h * t);
            let dist = problem.norm(&(&xt - &problem.x_dagger));
            if dist == 0.0 {
                continue;
            }
            inf = inf.min(problem.bregman_error(&xt) / dist.powf(q));
        }
    }
    if !inf.is_finite() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(if inf < COERCIVITY_FLOOR { Coercivity::Fail { infimum: inf } } else { Coercivity::Estimate(inf) })
}

/// `y + delta * u` with `u` a seeded direction of unit Euclidean norm.
pub fn add_noise(y: &Array1<f64>, delta: f64, seed: u64) -> Array1<f64> {
    add_noise_lp(y, delta, seed, 2.0)
}

/// As [`add_noise`], normalising the direction in the ℓ^p norm.
pub fn add_noise_lp(y: &Array1<f64>, delta: f64, seed: u64, p: f64) -> Array1<f64> {
    if delta == 0.0 {
        return y.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Array1<f64> = (0..y.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = lp_norm(u.view(), p);
    y + &(u * (delta / norm))
}

/// `psi(|F(x) - y_data|) + alpha * Omega(x)`
pub fn tikhonov_value(
    problem: &ProblemInstance,
    psi: &IndexFunction,
    alpha: f64,
    x: &Array1<f64>,
    y_data: &Array1<f64>,
) -> Result<f64> {
    let r = problem.norm(&problem.residual(x, y_data));
    Ok(psi.evaluate(r)? + alpha * problem.penalty.value(x))
}

/// Membership in `{x : psi(|F(x) - y|) + alpha Omega(x) <= c}` (exact data).
pub fn level_set_member(problem: &ProblemInstance, psi: &IndexFunction, alpha: f64, c: f64, x: &Array1<f64>) -> bool {
    match tikhonov_value(problem, psi, alpha, x, &problem.y) {
        Ok(v) => v <= c,
        Err(_) => false,
    }
}

/// `alpha_max * (1 + Omega(x_dagger))`, a level guaranteed to contain `x_dagger`
/// and the regularized solutions for small noise.
pub fn containment_level(problem: &ProblemInstance, alpha_max: f64) -> f64 {
    alpha_max * (1.0 + problem.penalty.value(&problem.x_dagger))
}

const SAMPLE_BATCH: usize = 200;
const MIN_ACCEPTANCE: f64 = 0.01;
const MIN_RADIUS: f64 = 1e-8;

/// Rejection sampling from balls around `x_dagger`; the first element is
/// `x_dagger` itself. Radii are `r * u` with `u` uniform, so points cluster
/// towards `x_dagger` where the quantified inequalities are tightest.
pub fn sample_level_set(
    problem: &ProblemInstance,
    psi: &IndexFunction,
    alpha_max: f64,
    rho: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    if !(alpha_max > 0.0) {
        return Err(Error::PreconditionViolated("alpha_max must be positive".into()));
    }
    if rho < alpha_max * problem.penalty.value(&problem.x_dagger) {
        return Err(Error::PreconditionViolated(format!("level {rho} excludes x_dagger")));
    }
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    out.push(problem.x_dagger.clone());
    let n = problem.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut radius = 2.0 * (problem.norm(&problem.x_dagger) + (rho / alpha_max).sqrt());
    while out.len() < count {
        let mut accepted = 0;
        for _ in 0..SAMPLE_BATCH {
            if out.len() == count {
                break;
            }
            let dir: Array1<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let dir_norm = problem.norm(&dir);
            let r = radius * rng.random::<f64>();
            let x = &problem.x_dagger + &(dir * (r / dir_norm));
            if level_set_member(problem, psi, alpha_max, rho, &x) {
                out.push(x);
                accepted += 1;
            }
        }
        if out.len() < count && (accepted as f64) < MIN_ACCEPTANCE * SAMPLE_BATCH as f64 {
            radius *= 0.5;
            if radius < MIN_RADIUS {
                return Err(Error::SamplingFailed(format!("acceptance stayed below 1% down to radius {radius:e}")));
            }
        }
    }
    Ok(out)
}
