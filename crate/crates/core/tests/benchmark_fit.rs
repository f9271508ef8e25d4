use rtmg_core::benchmark::{fit_egarch_t, fit_gjr_t, hs_var_es, parametric_var_es, ParamsEgarch, ParamsGjr};
use statrs::function::gamma::ln_gamma;

const GJR_TRUTH: ParamsGjr = ParamsGjr { omega: 0.2, beta: 0.5, gamma: 0.2, alpha: 0.3, nu: 8.0 };
const EGARCH_TRUTH: ParamsEgarch = ParamsEgarch { omega: 0.0, beta: 0.9, tau1: -0.1, tau2: 0.25, nu: 8.0 };

/// Plain GARCH(1,1) with unit-variance t errors, written out independently.
fn garch_t_loglik(r: &[f64], omega: f64, beta: f64, gamma: f64, nu: f64) -> f64 {
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let mut h = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
    let mut l = 0.0;
    for &x in r {
        l += c - 0.5 * h.ln() - (nu + 1.0) / 2.0 * (1.0 + x * x / ((nu - 2.0) * h)).ln();
        h = omega + beta * h + gamma * x * x;
    }
    l
}

#[test]
fn gjr_without_leverage_matches_garch_likelihood() {
    let p = ParamsGjr { omega: 0.05, beta: 0.88, gamma: 0.07, alpha: 0.0, nu: 6.5 };
    let r = p.simulate(2000, 200, 3).unwrap();
    let a = p.loglik(&r);
    let b = garch_t_loglik(&r, p.omega, p.beta, p.gamma, p.nu);
    assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
}

#[test]
fn gjr_recovers_simulated_parameters() {
    let mut sum = [0.0; 5];
    let reps = 4;
    for seed in 0..reps {
        let r = GJR_TRUTH.simulate(20_000, 500, 100 + seed).unwrap();
        let fit = fit_gjr_t(&r, None).unwrap();
        assert!(fit.loglik >= GJR_TRUTH.loglik(&r), "MLE below the truth on seed {seed}");
        for (s, v) in sum.iter_mut().zip(fit.params.to_array()) {
            *s += v / reps as f64;
        }
    }
    for (est, truth) in sum.iter().zip(GJR_TRUTH.to_array()) {
        assert!((est - truth).abs() <= 0.1 * truth.abs(), "{est} vs {truth}");
    }
}

#[test]
fn egarch_recovers_simulated_parameters() {
    let r = EGARCH_TRUTH.simulate(20_000, 500, 7).unwrap();
    let fit = fit_egarch_t(&r, None).unwrap();
    assert!(fit.loglik >= EGARCH_TRUTH.loglik(&r));
    let est = fit.params;
    assert!((est.beta - 0.9).abs() <= 0.09);
    assert!((est.tau1 + 0.1).abs() <= 0.01 + 0.02);
    assert!((est.tau2 - 0.25).abs() <= 0.025 + 0.02);
    assert!((est.nu - 8.0).abs() <= 1.6);
}

#[test]
fn refitting_from_the_estimate_does_not_improve() {
    let r = GJR_TRUTH.simulate(1500, 500, 9).unwrap();
    let fit = fit_gjr_t(&r, None).unwrap();
    let again = fit_gjr_t(&r, Some(fit.params)).unwrap();
    assert!(again.loglik - fit.loglik <= 1e-6, "{} -> {}", fit.loglik, again.loglik);

    let r = EGARCH_TRUTH.simulate(1500, 500, 9).unwrap();
    let fit = fit_egarch_t(&r, None).unwrap();
    let again = fit_egarch_t(&r, Some(fit.params)).unwrap();
    assert!(again.loglik - fit.loglik <= 1e-6, "{} -> {}", fit.loglik, again.loglik);
}

#[test]
fn fitted_paths_are_positive_and_consistent() {
    let r = GJR_TRUTH.simulate(1000, 500, 4).unwrap();
    let fit = fit_gjr_t(&r, None).unwrap();
    assert_eq!(fit.h.len(), r.len());
    assert!(fit.h.iter().all(|&h| h > 0.0) && fit.h_next > 0.0);
    let (h, next) = fit.params.filter(&r);
    assert_eq!(h, fit.h);
    assert_eq!(next, fit.h_next);
}

#[test]
fn hs_and_parametric_forecasts_are_ordered() {
    let r = GJR_TRUTH.simulate(1000, 500, 5).unwrap();
    let fit = fit_gjr_t(&r, None).unwrap();
    for alpha in [0.01, 0.025, 0.05] {
        let (v, e) = hs_var_es(&r, &fit.h, fit.h_next, alpha).unwrap();
        assert!(e <= v && v < 0.0);
        let (pv, pe) = parametric_var_es(fit.params.nu, fit.h_next, alpha).unwrap();
        assert!(pe < pv && pv < 0.0);
        // both are scaled by the same one-step-ahead volatility
        assert!((v / pv - 1.0).abs() < 0.5, "HS {v} vs parametric {pv}");
    }
}
