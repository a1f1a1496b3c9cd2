use varreg_core::harness::{fit_points, RateModel};
use varreg_core::index::IndexFunction;
use varreg_core::numeric::log_space;
use varreg_core::source::{rate_function_theorem3, Decay, PsiTransform};
use varreg_core::build_calculus;

fn log_rate(nu: f64, q_star: f64) -> IndexFunction {
    let pt = PsiTransform::new(Decay::Logarithmic { nu, r_bar: 1.0 }, q_star).unwrap();
    rate_function_theorem3(pt, IndexFunction::identity()).unwrap()
}

fn fitted_mu(phi: &IndexFunction, lo: f64, hi: f64) -> f64 {
    let ts = log_space(lo, hi, 40);
    let vals: Vec<f64> = ts.iter().map(|&t| phi.evaluate(t).unwrap()).collect();
    fit_points(&ts, &vals, RateModel::Logarithmic).unwrap().exponent
}

#[test]
fn log_rate_exponent_approaches_prediction_in_the_tail() {
    // the correction log(R) = log(1/t) - q* nu log log R decays only like 1/log log(1/t)
    let phi = log_rate(1.0, 2.0);
    let near = fitted_mu(&phi, 1e-12, 1e-4);
    let far = fitted_mu(&phi, 1e-300, 1e-60);
    assert!(near > far && far > 2.0);
    assert!((far - 2.0).abs() < 0.1, "far-tail exponent {far}");
    let phi = log_rate(0.5, 2.0);
    assert!((fitted_mu(&phi, 1e-300, 1e-60) - 1.0).abs() < 0.05);
}

#[test]
fn g_of_f_follows_young_equality() {
    // G(f(s)) = s f(s) - H(s); it coincides with H only when f is linear
    for (kappa, linear) in [(1.0, true), (0.5, false)] {
        let tri = build_calculus(IndexFunction::monomial(1.0, 2.0).unwrap(), IndexFunction::power(kappa).unwrap()).unwrap();
        for s in [0.01, 0.1, 0.5] {
            let fs = tri.f.evaluate(s).unwrap();
            let g = tri.g.evaluate(fs).unwrap();
            let h = tri.h.evaluate(s).unwrap();
            assert!((g - (s * fs - h)).abs() <= 1e-12 * g.max(1e-300));
            assert_eq!((g - h).abs() <= 1e-12 * h, linear);
        }
    }
}
