use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use ndarray::{Array1, Array2};

use crate::problem::ProblemInstance;
use crate::{Error, Result};

/// Iteration count of the projected-gradient fallback.
const DENSE_ITERATIONS: usize = 10_000;
/// `xi` counts as outside the range of `A^*` when `|A^{-*} xi| > RANGE_RATIO * |xi|`.
pub const RANGE_RATIO: f64 = 1e6;

/// One evaluation of the distance function at radius `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceEval {
    pub radius: f64,
    /// `d(R)`
    pub value: f64,
    /// Minimizer `w_R`.
    pub w: Array1<f64>,
    /// `r_R = xi - A^* w_R`, so that `|r_R| = d(R)`.
    pub remainder: Array1<f64>,
    /// Lagrange multiplier of the ball constraint (zero when inactive).
    pub lambda: f64,
}

#[derive(Clone, Debug)]
enum Model {
    /// `A^* = diag(s)`
    Diagonal { s: Array1<f64> },
    /// `A^*` as an explicit matrix mapping `Y` into `X`.
    Dense { adjoint: Array2<f64>, lipschitz: f64 },
}

/// `d(R) = min { |xi - A^* w| : |w| <= R }` with an append-only cache.
pub struct DistanceFunction {
    model: Model,
    xi: Array1<f64>,
    cache: RwLock<HashMap<u64, DistanceEval>>,
}

impl fmt::Debug for DistanceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistanceFunction").field("model", &self.model).field("xi", &self.xi).finish()
    }
}

impl Clone for DistanceFunction {
    fn clone(&self) -> Self {
        let cache = self.cache.read().map(|c| c.clone()).unwrap_or_default();
        Self { model: self.model.clone(), xi: self.xi.clone(), cache: RwLock::new(cache) }
    }
}

impl DistanceFunction {
    /// Distance function of the linearization `A = F'(x_dagger)` with `xi = Omega'(x_dagger)`.
    pub fn from_problem(problem: &ProblemInstance) -> Result<Self> {
        if problem.space.norm_exponent != 2.0 {
            return Err(Error::NotSupported("distance functions need Euclidean norms".into()));
        }
        let s = problem.operator.jacobian_diag(&problem.x_dagger);
        Self::diagonal(s, problem.xi.clone())
    }

    pub fn diagonal(s: Array1<f64>, xi: Array1<f64>) -> Result<Self> {
        if s.len() != xi.len() {
            return Err(Error::InvalidConfig("operator and xi dimensions differ".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue);
        }
        Ok(Self { model: Model::Diagonal { s }, xi, cache: RwLock::new(HashMap::new()) })
    }

    /// General `A^*` given as a matrix with `xi.len()` rows.
    pub fn dense(adjoint: Array2<f64>, xi: Array1<f64>) -> Result<Self> {
        if adjoint.nrows() != xi.len() {
            return Err(Error::InvalidConfig("adjoint rows must match xi".into()));
        }
        let lipschitz = spectral_norm_sq(&adjoint);
        Ok(Self { model: Model::Dense { adjoint, lipschitz }, xi, cache: RwLock::new(HashMap::new()) })
    }

    pub fn xi(&self) -> &Array1<f64> {
        &self.xi
    }

    pub fn xi_norm(&self) -> f64 {
        self.xi.dot(&self.xi).sqrt()
    }

    /// `A^* w`
    pub fn adjoint_apply(&self, w: &Array1<f64>) -> Array1<f64> {
        match &self.model {
            Model::Diagonal { s } => s * w,
            Model::Dense { adjoint, .. } => adjoint.dot(w),
        }
    }

    /// Norm of the minimum-norm solution of `A^* w = xi` (infinite when none exists).
    pub fn exact_source_norm(&self) -> f64 {
        match &self.model {
            Model::Diagonal { s } => {
                let mut acc = 0.0;
                for (sj, xj) in s.iter().zip(&self.xi) {
                    if *sj == 0.0 {
                        if *xj != 0.0 {
                            return f64::INFINITY;
                        }
                    } else {
                        acc += (xj / sj).powi(2);
                    }
                }
                acc.sqrt()
            }
            Model::Dense { .. } => {
                // probe with a very large radius
                let big = RANGE_RATIO * RANGE_RATIO * self.xi_norm().max(1.0);
                match self.evaluate(big) {
                    Ok(e) if e.value <= 1e-10 * self.xi_norm() => e.w.dot(&e.w).sqrt(),
                    _ => f64::INFINITY,
                }
            }
        }
    }

    /// Full evaluation at radius `radius`, cached.
    pub fn evaluate(&self, radius: f64) -> Result<DistanceEval> {
        if !(radius >= 0.0) {
            return Err(Error::PreconditionViolated(format!("radius must be non-negative, got {radius}")));
        }
        let key = radius.to_bits();
        if let Some(hit) = self.cache.read().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let eval = match &self.model {
            Model::Diagonal { s } => diagonal_distance(s, &self.xi, radius),
            Model::Dense { adjoint, lipschitz } => dense_distance(adjoint, *lipschitz, &self.xi, radius),
        };
        if let Ok(mut c) = self.cache.write() {
            c.entry(key).or_insert_with(|| eval.clone());
        }
        Ok(eval)
    }

    /// `(d(R), w_R)`
    pub fn distance(&self, radius: f64) -> Result<(f64, Array1<f64>)> {
        let e = self.evaluate(radius)?;
        Ok((e.value, e.w))
    }

    /// `d(R)` without caching, for inner loops over continuous radii.
    pub fn value_at(&self, radius: f64) -> Result<f64> {
        Ok(self.solve_uncached(radius)?.value)
    }

    /// `d'(R) = -lambda R / d(R)` from the envelope theorem.
    pub fn slope_at(&self, radius: f64) -> Result<f64> {
        let e = self.solve_uncached(radius)?;
        if e.value == 0.0 {
            return Ok(0.0);
        }
        Ok(-e.lambda * radius / e.value)
    }

    fn solve_uncached(&self, radius: f64) -> Result<DistanceEval> {
        if !(radius >= 0.0) {
            return Err(Error::PreconditionViolated(format!("radius must be non-negative, got {radius}")));
        }
        Ok(match &self.model {
            Model::Diagonal { s } => diagonal_distance(s, &self.xi, radius),
            Model::Dense { adjoint, lipschitz } => dense_distance(adjoint, *lipschitz, &self.xi, radius),
        })
    }

    /// `(|w(lambda)|, d)` on the multiplier path of the diagonal model.
    pub fn multiplier_point(&self, lambda: f64) -> Option<(f64, f64)> {
        let Model::Diagonal { s } = &self.model else {
            return None;
        };
        let (w, r) = diagonal_at(s, &self.xi, lambda);
        Some((w.dot(&w).sqrt(), r.dot(&r).sqrt()))
    }

    /// Radius `R` with `d(R) = v`, by bisection on the multiplier; only the
    /// diagonal model has the explicit parametrisation, others return `None`.
    pub fn radius_at_distance(&self, v: f64) -> Option<f64> {
        let Model::Diagonal { s } = &self.model else {
            return None;
        };
        let norm = |a: &Array1<f64>| a.dot(a).sqrt();
        if !(v > 0.0 && v < self.xi_norm()) {
            return None;
        }
        let d = |lambda: f64| norm(&diagonal_at(s, &self.xi, lambda).1);
        let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
        while d(lo) >= v {
            lo *= 1e-2;
            if lo < f64::MIN_POSITIVE * 1e10 {
                return None;
            }
        }
        while d(hi) <= v {
            hi *= 1e2;
            if !hi.is_finite() {
                return None;
            }
        }
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if !(mid > lo && mid < hi) {
                break;
            }
            if d(mid) > v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(norm(&diagonal_at(s, &self.xi, (lo * hi).sqrt()).0))
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }
}

fn zero_radius(xi: &Array1<f64>, dim_w: usize) -> DistanceEval {
    DistanceEval {
        radius: 0.0,
        value: xi.dot(xi).sqrt(),
        w: Array1::zeros(dim_w),
        remainder: xi.clone(),
        lambda: f64::INFINITY,
    }
}

fn diagonal_at(s: &Array1<f64>, xi: &Array1<f64>, lambda: f64) -> (Array1<f64>, Array1<f64>) {
    let w = ndarray::Zip::from(s).and(xi).map_collect(|&sj, &xj| sj * xj / (sj * sj + lambda));
    // r_j = xi_j - s_j w_j = xi_j lambda / (s_j^2 + lambda), computed without cancellation
    let r = ndarray::Zip::from(s).and(xi).map_collect(|&sj, &xj| xj * lambda / (sj * sj + lambda));
    (w, r)
}

/// Lagrangian bisection: `w(lambda)_j = s_j xi_j / (s_j^2 + lambda)` with
/// `lambda >= 0` such that `|w(lambda)| = R`, or `lambda = 0` when the
/// unconstrained least-squares solution already fits.
fn diagonal_distance(s: &Array1<f64>, xi: &Array1<f64>, radius: f64) -> DistanceEval {
    if radius == 0.0 {
        return zero_radius(xi, s.len());
    }
    let norm = |v: &Array1<f64>| v.dot(v).sqrt();
    if s.iter().all(|v| *v != 0.0) {
        let w0 = xi / s;
        if norm(&w0) <= radius {
            let r = xi - &(s * &w0);
            return DistanceEval { radius, value: norm(&r), w: w0, remainder: r, lambda: 0.0 };
        }
    }
    let sxi = norm(&(s * xi));
    if sxi == 0.0 {
        return DistanceEval { radius, lambda: 0.0, ..zero_radius(xi, s.len()) };
    }
    // |w(lambda)| <= |s xi| / lambda, so this upper end is feasible
    let mut hi = sxi / radius;
    let mut lo = hi;
    let smin2 = s.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    while norm(&diagonal_at(s, xi, lo).0) <= radius {
        lo *= 1e-3;
        if lo < smin2 * 1e-30 || lo < f64::MIN_POSITIVE * 1e30 {
            break;
        }
    }
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if norm(&diagonal_at(s, xi, mid).0) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the end whose norm is closest to the radius
    let (w_lo, r_lo) = diagonal_at(s, xi, lo);
    let (w_hi, r_hi) = diagonal_at(s, xi, hi);
    let (lambda, w, r) = if (norm(&w_lo) - radius).abs() < (norm(&w_hi) - radius).abs() {
        (lo, w_lo, r_lo)
    } else {
        (hi, w_hi, r_hi)
    };
    DistanceEval { radius, value: norm(&r), w, remainder: r, lambda }
}

fn spectral_norm_sq(b: &Array2<f64>) -> f64 {
    let mut v = Array1::from_elem(b.ncols(), 1.0 / (b.ncols().max(1) as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..500 {
        let u = b.t().dot(&b.dot(&v));
        let n = u.dot(&u).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        v = u / n;
        if (n - est).abs() <= 1e-14 * n {
            est = n;
            break;
        }
        est = n;
    }
    est * (1.0 + 1e-10)
}

/// Projected gradient on `0.5 |xi - B w|^2` over the ball of radius `R`.
fn dense_distance(b: &Array2<f64>, lipschitz: f64, xi: &Array1<f64>, radius: f64) -> DistanceEval {
    if radius == 0.0 || lipschitz == 0.0 {
        return DistanceEval { radius, ..zero_radius(xi, b.ncols()) };
    }
    let step = 1.0 / lipschitz;
    let mut w = Array1::<f64>::zeros(b.ncols());
    for _ in 0..DENSE_ITERATIONS {
        let r = xi - &b.dot(&w);
        let next = &w + &(b.t().dot(&r) * step);
        let n = next.dot(&next).sqrt();
        let next = if n > radius { next * (radius / n) } else { next };
        let change = (&next - &w).dot(&(&next - &w)).sqrt();
        w = next;
        if change <= 1e-15 * radius {
            break;
        }
    }
    let r = xi - &b.dot(&w);
    let wn2 = w.dot(&w);
    let lambda = if wn2 > 0.0 && (wn2.sqrt() - radius).abs() <= 1e-9 * radius {
        (w.dot(&b.t().dot(&r)) / wn2).max(0.0)
    } else {
        0.0
    };
    DistanceEval { radius, value: r.dot(&r).sqrt(), w, remainder: r, lambda }
}
