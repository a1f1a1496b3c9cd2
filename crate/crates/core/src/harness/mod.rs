//! End-to-end experiments: a-priori parameter choice, noise-level sweeps,
//! rate fitting and report emission.

mod config;
mod fit;
mod report;

use rayon::prelude::*;

pub use config::{DeltaGrid, DistanceSpec, ExperimentConfig, Mode};
pub use fit::{fit_points, fit_rate, RateFit, RateModel};
pub use report::{emit_report, parse_csv, render_csv, render_text, ReportFormat, CSV_HEADER};

use crate::index::{build_calculus, quasi_additivity_constants, CalculusTriple, Family, IndexFunction, QuasiAdditivity};
use crate::problem::{add_noise, containment_level, level_set_member, sample_level_set, ProblemInstance};
use crate::solver::{delta_max_of, minimize};
use crate::source::{
    canonical_source, rate_function_theorem3, structural_check, vi_theorem2, vi_theorem3, Bound, Decay, PsiTransform,
    ViReport,
};
use crate::{Error, Result};

/// `alpha(delta) = f(phi(delta)) / (a beta2)`, with the equivalent
/// `G^{-1}(psi(delta)) / (a beta2)` when it is cheap enough to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub alpha_via_g: Option<f64>,
}

impl AlphaChoice {
    /// Relative disagreement of the two evaluations.
    pub fn mismatch(&self) -> Option<f64> {
        self.alpha_via_g.map(|g| (g - self.alpha).abs() / self.alpha)
    }
}

pub fn alpha_choice(triple: &CalculusTriple, a: f64, beta2: f64, delta: f64) -> Result<AlphaChoice> {
    if !(a > 0.0 && beta2 > 0.0) {
        return Err(Error::PreconditionViolated(format!("need a, beta2 > 0 (got {a}, {beta2})")));
    }
    if !(delta > 0.0) {
        return Err(Error::PreconditionViolated(format!("noise level must be positive, got {delta}")));
    }
    let scale = a * beta2;
    let alpha = triple.f_of_phi(delta)? / scale;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::NonFiniteValue);
    }
    // G^{-1} nests four numerical inversions when phi is itself implicit
    let alpha_via_g = match triple.phi.family() {
        Family::Custom(_) => None,
        _ => triple.g_inverse_of_psi(delta).ok().map(|g| g / scale),
    };
    Ok(AlphaChoice { alpha, alpha_via_g })
}

#[derive(Clone, Debug, PartialEq)]
pub enum CertificationStatus {
    /// Zero violations on the level-set samples.
    Passed,
    Failed { violations: usize },
    /// No certificate could be produced; the reason is recorded.
    Unavailable(String),
}

#[derive(Clone, Debug)]
pub struct Certification {
    pub status: CertificationStatus,
    /// Structural constant used for `beta2`.
    pub structural_c: f64,
    pub vi: Option<ViReport>,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.status == CertificationStatus::Passed
    }

    pub fn describe(&self) -> String {
        match &self.status {
            CertificationStatus::Passed => {
                let n = self.vi.as_ref().map_or(0, |v| v.records.len());
                format!("passed ({n} samples)")
            }
            CertificationStatus::Failed { violations } => format!("failed ({violations} violations)"),
            CertificationStatus::Unavailable(why) => format!("unavailable: {why}"),
        }
    }
}

/// A configured experiment with its rate function, constants and certificate.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: ProblemInstance,
    pub psi: IndexFunction,
    pub sigma: IndexFunction,
    pub triple: CalculusTriple,
    pub beta1: f64,
    pub beta2: f64,
    pub a: f64,
    pub b: f64,
    pub deltas: Vec<f64>,
    pub rho: f64,
    pub certification: Certification,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem.build()?;
        let psi = config.psi.build()?;
        let sigma = config.sigma.build()?;
        let rho = containment_level(&problem, config.alpha_max);
        let samples = sample_level_set(&problem, &psi, config.alpha_max, rho, config.vi_samples, config.seed)?;

        let structural = match config.structural_c {
            Some(c) => Ok(c),
            None => match structural_check(&problem, &sigma, &samples)? {
                Bound::Bounded(c) if c > 0.0 => Ok(c),
                Bound::Bounded(_) => Ok(1.0),
                Bound::Unbounded { ratio } => Err(format!("structural condition fails (ratio {ratio:e})")),
            },
        };

        let q_star = PsiTransform::conjugate(config.q);
        let (phi, beta1, beta2, status, vi, c) = match structural {
            Err(why) => {
                let phi = match config.mode {
                    Mode::Thm2 => config.phi.as_ref().unwrap_or(&config.sigma).build()?,
                    Mode::Thm3 => analytic_or_operator_phi(config, &problem, &sigma, q_star)?,
                };
                let beta1 = if config.mode == Mode::Thm2 { 0.0 } else { 1.0 / config.q };
                (phi, beta1, f64::NAN, CertificationStatus::Unavailable(why), None, f64::NAN)
            }
            Ok(c) => match config.mode {
                Mode::Thm2 => {
                    let phi = config.phi.as_ref().unwrap_or(&config.sigma).build()?;
                    let w = canonical_source(&problem);
                    match vi_theorem2(&problem, &phi, c, &w, &samples) {
                        Ok(vi) => {
                            let status = status_of(&vi);
                            (phi, 0.0, vi.beta2, status, Some(vi), c)
                        }
                        Err(e) => (phi, 0.0, f64::NAN, CertificationStatus::Unavailable(e.to_string()), None, c),
                    }
                }
                Mode::Thm3 => {
                    let c_hat = c + config.c_q.powf(-q_star / config.q) / q_star;
                    match config.distance.as_ref().expect("validated") {
                        DistanceSpec::Operator => match vi_theorem3(&problem, &sigma, c, config.q, config.c_q, &samples) {
                            Ok(rep) => {
                                let status = status_of(&rep.vi);
                                (rep.phi, 1.0 / config.q, rep.c_hat, status, Some(rep.vi), c)
                            }
                            Err(e) => {
                                let phi = analytic_or_operator_phi(config, &problem, &sigma, q_star)?;
                                let status = CertificationStatus::Unavailable(e.to_string());
                                (phi, 1.0 / config.q, c_hat, status, None, c)
                            }
                        },
                        DistanceSpec::Log { .. } => {
                            let phi = analytic_or_operator_phi(config, &problem, &sigma, q_star)?;
                            let why = "analytic decay profile is not tied to the configured operator".to_string();
                            (phi, 1.0 / config.q, c_hat, CertificationStatus::Unavailable(why), None, c)
                        }
                    }
                }
            },
        };
        let beta2 = match config.beta2 {
            Some(b2) => b2,
            None if beta2.is_finite() && beta2 > 0.0 => beta2,
            None => {
                return Err(Error::InvalidConfig(format!(
                    "no certified beta2 ({}); supply one explicitly",
                    status_text(&status)
                )))
            }
        };

        let (a, b) = match (config.a, config.b) {
            (Some(a), Some(b)) => (a, b),
            (a_cfg, b_cfg) => match quasi_additivity_constants(&psi) {
                QuasiAdditivity::Verified { a, b } => (a_cfg.unwrap_or(a), b_cfg.unwrap_or(b)),
                QuasiAdditivity::Unverified => {
                    return Err(Error::InvalidConfig("quasi-additivity constants a, b must be given for this misfit".into()))
                }
            },
        };

        let mut deltas = config.delta_grid.values()?;
        if let Family::Logarithmic { .. } = phi.family() {
            deltas.retain(|d| *d <= phi.domain_max());
            if deltas.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "every noise level exceeds the domain of phi ({:e})",
                    phi.domain_max()
                )));
            }
        }
        let triple = build_calculus(psi.clone(), phi)?;
        Ok(Self {
            config: config.clone(),
            problem,
            psi,
            sigma,
            triple,
            beta1,
            beta2,
            a,
            b,
            deltas,
            rho,
            certification: Certification { status, structural_c: c, vi },
        })
    }

    pub fn phi(&self) -> &IndexFunction {
        &self.triple.phi
    }

    pub fn alpha(&self, delta: f64) -> Result<AlphaChoice> {
        alpha_choice(&self.triple, self.a, self.beta2, delta)
    }

    /// `((a + b) psi(delta) + G(alpha a beta2)) / ((1 - beta1) a alpha)` at the a-priori `alpha`.
    pub fn estimate_bound(&self, delta: f64) -> Result<f64> {
        let alpha = self.alpha(delta)?.alpha;
        let g = self.triple.g_at_f_of_phi(delta)?;
        let psi = self.psi.evaluate(delta)?;
        Ok(((self.a + self.b) * psi + g) / ((1.0 - self.beta1) * self.a * alpha))
    }

    /// One regularized solve at noise level `delta` with the given noise seed.
    pub fn solve(&self, delta: f64, noise_seed: u64) -> Result<(f64, crate::RegularizedSolution)> {
        let alpha = self.alpha(delta)?.alpha;
        let y_delta = add_noise(&self.problem.y, delta, noise_seed);
        Ok((alpha, minimize(&self.problem, &self.psi, alpha, &y_delta, &self.config.solver)?))
    }

    fn row_seed(&self, row: usize, repeat: usize) -> u64 {
        self.config.seed.wrapping_add((row * self.config.repeats + repeat) as u64)
    }

    fn run_row(&self, row: usize, delta: f64) -> (RateRow, RowDiagnostics) {
        let phi_delta = self.phi().evaluate(delta).unwrap_or(f64::NAN);
        let attempt = || -> Result<(RateRow, RowDiagnostics)> {
            let choice = self.alpha(delta)?;
            let mut d_sum = 0.0;
            let mut r_sum = 0.0;
            let mut converged = true;
            let mut member = true;
            for rep in 0..self.config.repeats {
                let y_delta = add_noise(&self.problem.y, delta, self.row_seed(row, rep));
                let sol = minimize(&self.problem, &self.psi, choice.alpha, &y_delta, &self.config.solver)?;
                d_sum += sol.bregman_error;
                r_sum += sol.residual_norm;
                converged &= sol.converged;
                member &= level_set_member(&self.problem, &self.psi, self.config.alpha_max, self.rho, &sol.x);
            }
            let k = self.config.repeats as f64;
            let bregman_error = d_sum / k;
            let bound = self.estimate_bound(delta)?;
            let row = RateRow {
                delta,
                alpha: choice.alpha,
                bregman_error,
                phi_delta,
                ratio: bregman_error / phi_delta,
                residual_norm: r_sum / k,
                converged,
            };
            let diag = RowDiagnostics {
                alpha_via_g: choice.alpha_via_g,
                bound,
                bound_holds: bregman_error <= bound * (1.0 + 1e-9) + 1e-14,
                member,
                error: None,
            };
            Ok((row, diag))
        };
        attempt().unwrap_or_else(|e| {
            let row = RateRow {
                delta,
                alpha: self.alpha(delta).map_or(f64::NAN, |c| c.alpha),
                bregman_error: f64::NAN,
                phi_delta,
                ratio: f64::NAN,
                residual_norm: f64::NAN,
                converged: false,
            };
            let diag = RowDiagnostics {
                alpha_via_g: None,
                bound: f64::NAN,
                bound_holds: false,
                member: false,
                error: Some(e.to_string()),
            };
            (row, diag)
        })
    }

    /// Runs every grid level; refuses to start without a passing certificate
    /// unless the configuration overrides it.
    pub fn sweep(&self) -> Result<RateReport> {
        if !self.certification.passed() && !self.config.override_vi {
            return Err(match self.certification.status {
                CertificationStatus::Failed { violations } => Error::CertificationFailed { violations },
                _ => Error::PreconditionViolated(format!(
                    "variational inequality {}; pass the override flag to sweep anyway",
                    self.certification.describe()
                )),
            });
        }
        let results: Vec<(RateRow, RowDiagnostics)> =
            self.deltas.par_iter().enumerate().map(|(i, &delta)| self.run_row(i, delta)).collect();
        let (rows, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let summary = self.summarize(&rows, &diagnostics);
        Ok(RateReport { rows, diagnostics, summary })
    }

    fn summarize(&self, rows: &[RateRow], diagnostics: &[RowDiagnostics]) -> RateSummary {
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let finite = ratios.iter().all(|r| r.is_finite());
        let max_ratio = ratios.iter().copied().fold(f64::NAN, f64::max);
        let coarsest_ratio = ratios.first().copied().unwrap_or(f64::NAN);
        let lower_half = &ratios[ratios.len() / 2..];
        let lower_half_max_ratio = lower_half.iter().copied().fold(f64::NAN, f64::max);
        let ratio_bound = self.config.ratio_factor * coarsest_ratio;
        let membership: Vec<(f64, f64, bool)> =
            rows.iter().zip(diagnostics).map(|(r, d)| (r.delta, r.alpha, d.member)).collect();
        let partial = RateReport { rows: rows.to_vec(), diagnostics: Vec::new(), summary: RateSummary::default() };
        RateSummary {
            max_ratio,
            coarsest_ratio,
            lower_half_max_ratio,
            ratio_bound,
            pass: !rows.is_empty() && finite && lower_half_max_ratio <= ratio_bound,
            power_fit: fit_rate(&partial, RateModel::Power).ok(),
            log_fit: fit_rate(&partial, RateModel::Logarithmic).ok(),
            delta_max: delta_max_of(&membership),
            bound_violations: diagnostics.iter().filter(|d| !d.bound_holds).count(),
            max_alpha_mismatch: diagnostics
                .iter()
                .zip(rows)
                .filter_map(|(d, r)| d.alpha_via_g.map(|g| (g - r.alpha).abs() / r.alpha))
                .reduce(f64::max),
            certification: self.certification.describe(),
        }
    }
}

fn status_of(vi: &ViReport) -> CertificationStatus {
    if vi.violations == 0 {
        CertificationStatus::Passed
    } else {
        CertificationStatus::Failed { violations: vi.violations }
    }
}

fn status_text(s: &CertificationStatus) -> String {
    Certification { status: s.clone(), structural_c: f64::NAN, vi: None }.describe()
}

fn analytic_or_operator_phi(
    config: &ExperimentConfig,
    problem: &ProblemInstance,
    sigma: &IndexFunction,
    q_star: f64,
) -> Result<IndexFunction> {
    let decay = match config.distance.as_ref().expect("validated") {
        DistanceSpec::Operator => Decay::Operator(crate::source::DistanceFunction::from_problem(problem)?),
        DistanceSpec::Log { nu, r_bar } => Decay::Logarithmic { nu: *nu, r_bar: *r_bar },
    };
    rate_function_theorem3(PsiTransform::new(decay, q_star)?, sigma.clone())
}

/// The calculus triple of a configuration, without sampling or certification.
pub fn calculus_of(config: &ExperimentConfig) -> Result<CalculusTriple> {
    let psi = config.psi.build()?;
    let phi = match config.mode {
        Mode::Thm2 => config.phi.as_ref().unwrap_or(&config.sigma).build()?,
        Mode::Thm3 => {
            let problem = config.problem.build()?;
            let sigma = config.sigma.build()?;
            analytic_or_operator_phi(config, &problem, &sigma, PsiTransform::conjugate(config.q))?
        }
    };
    build_calculus(psi, phi)
}

/// Prepares and sweeps in one call.
pub fn run_sweep(config: &ExperimentConfig) -> Result<RateReport> {
    Experiment::prepare(config)?.sweep()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub delta: f64,
    pub alpha: f64,
    pub bregman_error: f64,
    pub phi_delta: f64,
    /// `bregman_error / phi_delta`
    pub ratio: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Per-row checks that are not part of the CSV contract.
#[derive(Clone, Debug, PartialEq)]
pub struct RowDiagnostics {
    pub alpha_via_g: Option<f64>,
    /// Intermediate error bound at the certified constants.
    pub bound: f64,
    pub bound_holds: bool,
    /// Minimizer lies in the containment level set.
    pub member: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSummary {
    pub max_ratio: f64,
    pub coarsest_ratio: f64,
    pub lower_half_max_ratio: f64,
    pub ratio_bound: f64,
    pub pass: bool,
    pub power_fit: Option<RateFit>,
    pub log_fit: Option<RateFit>,
    pub delta_max: Option<f64>,
    pub bound_violations: usize,
    pub max_alpha_mismatch: Option<f64>,
    pub certification: String,
}

impl Default for RateSummary {
    fn default() -> Self {
        Self {
            max_ratio: f64::NAN,
            coarsest_ratio: f64::NAN,
            lower_half_max_ratio: f64::NAN,
            ratio_bound: f64::NAN,
            pass: false,
            power_fit: None,
            log_fit: None,
            delta_max: None,
            bound_violations: 0,
            max_alpha_mismatch: None,
            certification: String::new(),
        }
    }
}

/// Sweep rows in decreasing `delta`, with diagnostics and a summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub diagnostics: Vec<RowDiagnostics>,
    pub summary: RateSummary,
}

impl RateReport {
    pub fn from_rows(rows: Vec<RateRow>) -> Self {
        Self { rows, diagnostics: Vec::new(), summary: RateSummary::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_calculus;

    fn mono(c: f64, e: f64) -> IndexFunction {
        IndexFunction::monomial(c, e).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let triple = build_calculus(mono(1.0, 2.0), IndexFunction::identity()).unwrap();
        let c = alpha_choice(&triple, 1.0, 1.0, 0.1).unwrap();
        assert!((c.alpha - 0.2).abs() < 1e-15);
        assert!(c.mismatch().unwrap() < 1e-8);
        let doubled = alpha_choice(&triple, 1.0, 2.0, 0.1).unwrap();
        assert!((doubled.alpha - 0.1).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let a = alpha_choice(&triple, 1.0, 1.0, delta).unwrap().alpha;
            assert!(a < prev);
            assert!((delta * delta / a - delta / 2.0).abs() < 1e-15);
            prev = a;
        }
        assert!(alpha_choice(&triple, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn alpha_outside_domain_of_log_phi() {
        let triple = build_calculus(mono(1.0, 2.0), IndexFunction::logarithmic(1.0, 1.0).unwrap()).unwrap();
        assert!(alpha_choice(&triple, 2.0, 1.0, 0.5).is_err());
        assert!(alpha_choice(&triple, 2.0, 1.0, 1e-3).is_ok());
    }

    #[test]
    fn growing_ratio_lowers_fitted_power() {
        let rows: Vec<RateRow> = [1e-1, 1e-2, 1e-3, 1e-4]
            .iter()
            .zip([1.0, 2.0, 5.0, 9.0])
            .map(|(&delta, ratio)| RateRow {
                delta,
                alpha: delta,
                bregman_error: ratio * delta,
                phi_delta: delta,
                ratio,
                residual_norm: delta,
                converged: true,
            })
            .collect();
        let fit = fit_rate(&RateReport::from_rows(rows), RateModel::Power).unwrap();
        assert!(fit.exponent < 1.0);
    }
}
