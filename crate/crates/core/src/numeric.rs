//! Scalar numerics shared across modules: adaptive Simpson quadrature, bracketed
//! inversion of monotone maps, and small vector helpers.

use ndarray::{Array1, ArrayView1};

use crate::{Error, Result};

/// Default absolute tolerance for quadrature.
pub const QUAD_ABS_TOL: f64 = 1e-9;
/// Relative tolerance applied alongside [`QUAD_ABS_TOL`].
pub const QUAD_REL_TOL: f64 = 1e-11;
/// Hard cap on the recursion depth of adaptive Simpson.
pub const QUAD_MAX_DEPTH: u32 = 40;
/// Default tolerance for numeric inversion.
pub const INVERT_TOL: f64 = 1e-10;

#[inline]
fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
///
/// The local target is `min(abs_tol, rel_tol * |I0|)` where `I0` is the
/// single-panel estimate, so small integrals are still resolved to relative
/// accuracy. Recursion stops at [`QUAD_MAX_DEPTH`].
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = simpson(fa, fm, fb, b - a);
    let mut target = abs_tol.min(rel_tol * whole.abs());
    if !(target > 0.0) {
        target = abs_tol.min(f64::MIN_POSITIVE * 1e10);
    }
    recurse(f, a, fa, m, fm, b, fb, whole, target, QUAD_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || lm <= a || rm >= b {
        return Ok(left + right + delta / 15.0);
    }
    let l = recurse(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Solves `f(t) = target` for a non-decreasing `f` on the bracket `[lo, hi]`
/// by bisection, iterating until the bracket can no longer shrink.
pub fn bisect_increasing<F>(f: F, target: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bracketed Newton iteration for a strictly increasing `f` whose derivative
/// `df` is available. Any Newton step leaving the current bracket is replaced by
/// a bisection step, so the bracket invariant of plain bisection is kept.
pub fn safeguarded_newton<F, D>(f: F, df: D, target: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Result<f64>,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x)? - target;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = df(x)?;
        let newton = x - fx / slope;
        let next = if slope > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        if next <= lo || next >= hi {
            return Ok(x);
        }
        x = next;
    }
    Ok(x)
}

/// Central finite-difference derivative of `f` at `t`, falling back to a
/// one-sided difference when `t ± h` leaves `[0, upper]`.
pub fn central_difference<F>(f: F, t: f64, upper: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let h = 1e-6 * t.abs().max(1e-300);
    if t - h >= 0.0 && t + h <= upper {
        Ok((f(t + h)? - f(t - h)?) / (2.0 * h))
    } else if t + h <= upper {
        Ok((f(t + h)? - f(t)?) / h)
    } else if t - h >= 0.0 {
        Ok((f(t)? - f(t - h)?) / h)
    } else {
        Err(Error::NotDifferentiable { t })
    }
}

/// The ℓ^p norm.
pub fn lp_norm(v: ArrayView1<'_, f64>, p: f64) -> f64 {
    if p == 2.0 {
        v.dot(&v).sqrt()
    } else if p.is_infinite() {
        v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub fn l2_norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Ordinary least-squares line fit, returning `(slope, intercept, rms_residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}
