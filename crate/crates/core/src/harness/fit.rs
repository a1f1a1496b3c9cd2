use super::RateReport;
use crate::numeric::linear_fit;
use crate::{Error, Result};

const MIN_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateModel {
    /// `log D = kappa log delta + c`
    Power,
    /// `log D = -mu log log(1/delta) + c`
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    /// `kappa` for the power model, `mu` for the logarithmic one.
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the linear fit.
    pub residual: f64,
}

/// Least-squares fit over the converged rows with positive error.
pub fn fit_rate(report: &RateReport, model: RateModel) -> Result<RateFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = report
        .rows
        .iter()
        .filter(|r| r.converged && r.bregman_error > 0.0 && r.bregman_error.is_finite())
        .map(|r| (r.delta, r.bregman_error))
        .unzip();
    fit_points(&xs, &ys, model)
}

/// Fits `values` against `deltas` in the chosen model.
pub fn fit_points(deltas: &[f64], values: &[f64], model: RateModel) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = deltas
        .iter()
        .zip(values)
        .filter(|(d, v)| **d > 0.0 && **v > 0.0 && (model == RateModel::Power || **d < 1.0))
        .map(|(d, v)| (*d, *v))
        .collect();
    if usable.len() < MIN_POINTS {
        return Err(Error::InsufficientData { needed: MIN_POINTS, got: usable.len() });
    }
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let xs: Vec<f64> = usable
        .iter()
        .map(|(d, _)| match model {
            RateModel::Power => d.ln(),
            RateModel::Logarithmic => (1.0 / d).ln().ln(),
        })
        .collect();
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    let exponent = match model {
        RateModel::Power => slope,
        RateModel::Logarithmic => -slope,
    };
    Ok(RateFit { model, exponent, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RateRow;

    fn rows(d: impl Fn(f64) -> f64) -> RateReport {
        let rows = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&delta| RateRow {
                delta,
                alpha: delta,
                bregman_error: d(delta),
                phi_delta: delta,
                ratio: d(delta) / delta,
                residual_norm: delta,
                converged: true,
            })
            .collect();
        RateReport::from_rows(rows)
    }

    #[test]
    fn exact_power() {
        let fit = fit_rate(&rows(|d: f64| d.sqrt()), RateModel::Power).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn exact_logarithmic() {
        let fit = fit_rate(&rows(|d: f64| (1.0 / d).ln().powi(-2)), RateModel::Logarithmic).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn needs_four_converged_rows() {
        let mut r = rows(|d| d);
        r.rows[0].converged = false;
        r.rows[1].converged = false;
        assert!(matches!(fit_rate(&r, RateModel::Power), Err(Error::InsufficientData { needed: 4, got: 3 })));
    }
}
