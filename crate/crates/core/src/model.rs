//! Realized-GARCH and threshold-measurement Realized-GARCH with Student-t
//! returns and Gaussian measurement errors.
//!
//! Both models share the log-GARCH recursion
//!
//! ```text
//! log h_t = omega + beta * log h_{t-1} + gamma * log x_{t-1}
//! ```
//!
//! and differ only in the measurement equation for `log x_t`.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::dist::ln_t_norm;
use crate::error::{Error, Result};

pub const N_PARAMS: usize = 9;

/// Upper end of the support of `nu`.
///
/// The likelihood flattens to a positive constant as `nu` grows, so a flat
/// prior on the unbounded half-line `nu > 4` gives an improper posterior and
/// the sampler drifts off to arbitrarily large `nu`.
pub const NU_MAX: f64 = 100.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A parameter vector in the canonical order of its model kind.
pub type Theta = [f64; N_PARAMS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Threshold measurement equation switching on the sign of `r_{t-1}`.
    Rtmg,
    /// Single measurement equation with `tau1 z + tau2 (z^2 - 1)` leverage.
    Rg,
}

impl ModelKind {
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Rtmg => "rtmg",
            ModelKind::Rg => "rg",
        }
    }

    pub fn param_names(self) -> [&'static str; N_PARAMS] {
        match self {
            ModelKind::Rtmg => ParamsRtmg::NAMES,
            ModelKind::Rg => ParamsRg::NAMES,
        }
    }

    pub fn check_stationarity(self, theta: &Theta) -> bool {
        match self {
            ModelKind::Rtmg => ParamsRtmg::from_array(theta).check_stationarity(),
            ModelKind::Rg => ParamsRg::from_array(theta).check_stationarity(),
        }
    }

    pub fn loglik(self, theta: &Theta, series: &JointSeries) -> f64 {
        if !self.check_stationarity(theta) {
            return f64::NEG_INFINITY;
        }
        let path = PathCache::build(theta[0], theta[1], theta[2], series);
        let total = return_part(&path, theta[8]) + self.measurement_part(theta, &path, series);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    /// `l(x | r; theta)`: the Gaussian measurement-equation term.
    pub fn measurement_part(self, theta: &Theta, path: &PathCache, series: &JointSeries) -> f64 {
        let sigma = theta[7];
        let n = series.len() as f64;
        let inv_var = 1.0 / (sigma * sigma);
        let mut ss = 0.0;
        match self {
            ModelKind::Rtmg => {
                let (xi1, phi1, xi2, phi2) = (theta[3], theta[4], theta[5], theta[6]);
                for t in 0..series.len() {
                    let (xi, phi) = match series.regime_at(t) {
                        Regime::NonPositive => (xi1, phi1),
                        Regime::Positive => (xi2, phi2),
                    };
                    let e = series.log_x[t] - xi - phi * path.log_h[t];
                    ss += e * e;
                }
            }
            ModelKind::Rg => {
                let (xi, phi, tau1, tau2) = (theta[3], theta[4], theta[5], theta[6]);
                for t in 0..series.len() {
                    let z = path.z[t];
                    let e = series.log_x[t] - xi - phi * path.log_h[t] - tau1 * z - tau2 * (z * z - 1.0);
                    ss += e * e;
                }
            }
        }
        -0.5 * (n * (LN_2PI + (sigma * sigma).ln()) + ss * inv_var)
    }

    /// Analytic gradient of [`ModelKind::loglik`] with respect to `theta`.
    pub fn loglik_gradient(self, theta: &Theta, series: &JointSeries) -> Theta {
        let (omega, beta, gamma) = (theta[0], theta[1], theta[2]);
        let sigma = theta[7];
        let nu = theta[8];
        let n = series.len();

        let mut grad = [0.0; N_PARAMS];
        // d log h_t / d(omega, beta, gamma); log h_1 is parameter-free
        let mut dlh = [0.0f64; 3];
        let mut log_h = series.initial_log_h();

        let inv_var = 1.0 / (sigma * sigma);
        let dnorm = -0.5 * digamma(0.5 * (nu + 1.0)) + 0.5 / (nu - 2.0) + 0.5 * digamma(0.5 * nu);

        for t in 0..n {
            if t > 0 {
                let prev = log_h;
                log_h = omega + beta * prev + gamma * series.log_x[t - 1];
                dlh = [1.0 + beta * dlh[0], prev + beta * dlh[1], series.log_x[t - 1] + beta * dlh[2]];
            }
            let r = series.r[t];
            let u = r * r * (-log_h).exp();
            let q = u / (nu - 2.0);

            // return term
            let mut d_lh = -0.5 + 0.5 * (nu + 1.0) * q / (1.0 + q);
            grad[8] += -dnorm - 0.5 * (1.0 + q).ln() + 0.5 * (nu + 1.0) * q / ((nu - 2.0) * (1.0 + q));

            // measurement term: d/d e = -e / sigma^2
            let e;
            match self {
                ModelKind::Rtmg => {
                    let (ixi, iphi) = match series.regime_at(t) {
                        Regime::NonPositive => (3, 4),
                        Regime::Positive => (5, 6),
                    };
                    e = series.log_x[t] - theta[ixi] - theta[iphi] * log_h;
                    let de = -e * inv_var;
                    grad[ixi] -= de;
                    grad[iphi] -= de * log_h;
                    d_lh -= de * theta[iphi];
                }
                ModelKind::Rg => {
                    let (xi, phi, tau1, tau2) = (theta[3], theta[4], theta[5], theta[6]);
                    let z = r * (-0.5 * log_h).exp();
                    e = series.log_x[t] - xi - phi * log_h - tau1 * z - tau2 * (z * z - 1.0);
                    let de = -e * inv_var;
                    grad[3] -= de;
                    grad[4] -= de * log_h;
                    grad[5] -= de * z;
                    grad[6] -= de * (z * z - 1.0);
                    // dz/dlog h = -z/2
                    d_lh += de * (-phi + 0.5 * tau1 * z + tau2 * z * z);
                }
            }
            grad[7] += -1.0 / sigma + e * e / (sigma * sigma * sigma);

            grad[0] += d_lh * dlh[0];
            grad[1] += d_lh * dlh[1];
            grad[2] += d_lh * dlh[2];
        }
        grad
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rtmg" => Ok(ModelKind::Rtmg),
            "rg" => Ok(ModelKind::Rg),
            other => Err(Error::Config(format!("unknown realized model '{other}'"))),
        }
    }
}

/// Parameters of the threshold-measurement model, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsRtmg {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub xi1: f64,
    pub phi1: f64,
    pub xi2: f64,
    pub phi2: f64,
    pub sigma_eps: f64,
    pub nu: f64,
}

impl ParamsRtmg {
    pub const NAMES: [&'static str; N_PARAMS] =
        ["omega", "beta", "gamma", "xi1", "phi1", "xi2", "phi2", "sigma_eps", "nu"];

    /// Parameter values of the reference simulation design.
    pub const SIMULATION: ParamsRtmg = ParamsRtmg {
        omega: 0.1,
        beta: 0.65,
        gamma: 0.3,
        xi1: -0.2,
        phi1: 0.95,
        xi2: -0.5,
        phi2: 0.92,
        sigma_eps: 0.6,
        nu: 10.0,
    };

    pub fn from_array(a: &Theta) -> Self {
        Self {
            omega: a[0],
            beta: a[1],
            gamma: a[2],
            xi1: a[3],
            phi1: a[4],
            xi2: a[5],
            phi2: a[6],
            sigma_eps: a[7],
            nu: a[8],
        }
    }

    pub fn to_array(&self) -> Theta {
        [self.omega, self.beta, self.gamma, self.xi1, self.phi1, self.xi2, self.phi2, self.sigma_eps, self.nu]
    }

    /// Per-regime persistence `(beta + gamma phi1, beta + gamma phi2)`.
    pub fn persistence(&self) -> (f64, f64) {
        (self.beta + self.gamma * self.phi1, self.beta + self.gamma * self.phi2)
    }

    pub fn check_stationarity(&self) -> bool {
        let (p1, p2) = self.persistence();
        self.to_array().iter().all(|v| v.is_finite())
            && p1 < 1.0
            && p2 < 1.0
            && self.sigma_eps > 0.0
            && self.nu > 4.0
            && self.nu <= NU_MAX
    }

    pub fn filter_volatility(&self, series: &JointSeries) -> VolPath {
        filter_volatility(self.omega, self.beta, self.gamma, series)
    }

    pub fn loglik(&self, series: &JointSeries) -> f64 {
        ModelKind::Rtmg.loglik(&self.to_array(), series)
    }
}

/// Parameters of the baseline Realized-GARCH, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsRg {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub xi: f64,
    pub phi: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub sigma_eps: f64,
    pub nu: f64,
}

impl ParamsRg {
    pub const NAMES: [&'static str; N_PARAMS] =
        ["omega", "beta", "gamma", "xi", "phi", "tau1", "tau2", "sigma_eps", "nu"];

    pub fn from_array(a: &Theta) -> Self {
        Self {
            omega: a[0],
            beta: a[1],
            gamma: a[2],
            xi: a[3],
            phi: a[4],
            tau1: a[5],
            tau2: a[6],
            sigma_eps: a[7],
            nu: a[8],
        }
    }

    pub fn to_array(&self) -> Theta {
        [self.omega, self.beta, self.gamma, self.xi, self.phi, self.tau1, self.tau2, self.sigma_eps, self.nu]
    }

    pub fn persistence(&self) -> f64 {
        self.beta + self.gamma * self.phi
    }

    pub fn check_stationarity(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.persistence() < 1.0
            && self.sigma_eps > 0.0
            && self.nu > 4.0
            && self.nu <= NU_MAX
    }

    pub fn filter_volatility(&self, series: &JointSeries) -> VolPath {
        filter_volatility(self.omega, self.beta, self.gamma, series)
    }

    pub fn loglik(&self, series: &JointSeries) -> f64 {
        ModelKind::Rg.loglik(&self.to_array(), series)
    }
}

/// Measurement regime selected by the sign of the previous return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `r_{t-1} <= 0`
    NonPositive,
    /// `r_{t-1} > 0`
    Positive,
}

impl Regime {
    /// 1-based regime label.
    pub fn index(self) -> u8 {
        match self {
            Regime::NonPositive => 1,
            Regime::Positive => 2,
        }
    }
}

/// Self-exciting threshold at zero; the boundary belongs to the first regime.
pub fn regime(r_prev: f64) -> Regime {
    if r_prev <= 0.0 {
        Regime::NonPositive
    } else {
        Regime::Positive
    }
}

/// Daily percentage returns aligned with a positive realized measure.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSeries {
    dates: Vec<NaiveDate>,
    r: Vec<f64>,
    x: Vec<f64>,
    log_x: Vec<f64>,
    return_variance: f64,
}

impl JointSeries {
    pub fn new(dates: Vec<NaiveDate>, r: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if r.len() != x.len() || r.len() != dates.len() {
            return Err(Error::data(format!(
                "length mismatch: {} dates, {} returns, {} realized measures",
                dates.len(),
                r.len(),
                x.len()
            )));
        }
        if r.len() < 2 {
            return Err(Error::data("a joint series needs at least two observations"));
        }
        if let Some(t) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("return at index {t} is not finite")));
        }
        if let Some(t) = x.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::data(format!("realized measure at index {t} must be positive, got {}", x[t])));
        }
        let log_x = x.iter().map(|v| v.ln()).collect();
        let return_variance = sample_variance(&r);
        if !(return_variance > 0.0) {
            return Err(Error::data("returns have zero sample variance"));
        }
        Ok(Self { dates, r, x, log_x, return_variance })
    }

    /// Series indexed by consecutive weekdays starting 2000-01-03.
    pub fn with_synthetic_dates(r: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let dates = synthetic_dates(r.len());
        Self::new(dates, r, x)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.r
    }

    pub fn realized(&self) -> &[f64] {
        &self.x
    }

    pub fn log_realized(&self) -> &[f64] {
        &self.log_x
    }

    /// Sample variance of the returns, used to start the volatility recursion.
    pub fn return_variance(&self) -> f64 {
        self.return_variance
    }

    pub fn initial_log_h(&self) -> f64 {
        self.return_variance.ln()
    }

    /// Measurement regime at index `t`; the first observation uses regime 1.
    pub fn regime_at(&self, t: usize) -> Regime {
        if t == 0 {
            Regime::NonPositive
        } else {
            regime(self.r[t - 1])
        }
    }

    /// Contiguous sub-series `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<JointSeries> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.len())
            .ok_or_else(|| Error::data(format!("window {start}+{len} exceeds series length {}", self.len())))?;
        JointSeries::new(self.dates[start..end].to_vec(), self.r[start..end].to_vec(), self.x[start..end].to_vec())
    }

    /// Same observations with dates shifted by `days`.
    pub fn shift_dates(&self, days: i64) -> JointSeries {
        let mut out = self.clone();
        for d in &mut out.dates {
            *d += chrono::Duration::days(days);
        }
        out
    }
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)
}

pub(crate) fn synthetic_dates(n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Filtered conditional variances.
#[derive(Debug, Clone, PartialEq)]
pub struct VolPath {
    pub h: Vec<f64>,
    pub log_h: Vec<f64>,
}

impl VolPath {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Runs the log-GARCH recursion over `series`. `log h_1` is the log sample
/// variance of the series' returns.
pub fn filter_volatility(omega: f64, beta: f64, gamma: f64, series: &JointSeries) -> VolPath {
    let log_h = filter_log_h(omega, beta, gamma, series);
    let h = log_h.iter().map(|v| v.exp()).collect();
    VolPath { h, log_h }
}

fn filter_log_h(omega: f64, beta: f64, gamma: f64, series: &JointSeries) -> Vec<f64> {
    let mut log_h = Vec::with_capacity(series.len());
    let mut lh = series.initial_log_h();
    log_h.push(lh);
    for lx in &series.log_x[..series.len() - 1] {
        lh = omega + beta * lh + gamma * lx;
        log_h.push(lh);
    }
    log_h
}

/// `log h_{n+1}` implied by the last filtered variance and realized measure.
pub fn next_log_h(omega: f64, beta: f64, gamma: f64, last_log_h: f64, last_log_x: f64) -> f64 {
    omega + beta * last_log_h + gamma * last_log_x
}

/// Filtered path plus the per-observation quantities the likelihood needs.
#[derive(Debug, Clone)]
pub struct PathCache {
    pub log_h: Vec<f64>,
    /// `r_t^2 / h_t`
    pub u: Vec<f64>,
    /// `r_t / sqrt(h_t)`
    pub z: Vec<f64>,
    pub sum_log_h: f64,
}

impl PathCache {
    pub fn build(omega: f64, beta: f64, gamma: f64, series: &JointSeries) -> Self {
        let mut cache = PathCache {
            log_h: Vec::with_capacity(series.len()),
            u: Vec::with_capacity(series.len()),
            z: Vec::with_capacity(series.len()),
            sum_log_h: 0.0,
        };
        cache.refill(omega, beta, gamma, series);
        cache
    }

    /// Recomputes in place, reusing allocations.
    pub fn refill(&mut self, omega: f64, beta: f64, gamma: f64, series: &JointSeries) {
        self.log_h.clear();
        self.u.clear();
        self.z.clear();
        let mut lh = series.initial_log_h();
        let mut sum = 0.0;
        for t in 0..series.len() {
            if t > 0 {
                lh = omega + beta * lh + gamma * series.log_x[t - 1];
            }
            let inv_sd = (-0.5 * lh).exp();
            let z = series.r[t] * inv_sd;
            self.log_h.push(lh);
            self.z.push(z);
            self.u.push(z * z);
            sum += lh;
        }
        self.sum_log_h = sum;
    }

    pub fn last_log_h(&self) -> f64 {
        *self.log_h.last().expect("non-empty path")
    }
}

/// `l(r; theta)`: the Student-t return term, depending on `theta` only through
/// the filtered path and `nu`.
pub fn return_part(path: &PathCache, nu: f64) -> f64 {
    let n = path.u.len() as f64;
    let c = 1.0 / (nu - 2.0);
    let s: f64 = path.u.iter().map(|u| (u * c).ln_1p()).sum();
    -(n * ln_t_norm(nu) + 0.5 * path.sum_log_h + 0.5 * (nu + 1.0) * s)
}

/// Exact log-likelihood of the threshold-measurement model.
pub fn loglik_rtmg(params: &ParamsRtmg, series: &JointSeries) -> f64 {
    ModelKind::Rtmg.loglik(&params.to_array(), series)
}

/// Exact log-likelihood of the baseline Realized-GARCH.
pub fn loglik_rg(params: &ParamsRg, series: &JointSeries) -> f64 {
    ModelKind::Rg.loglik(&params.to_array(), series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(r: &[f64], x: &[f64]) -> JointSeries {
        JointSeries::with_synthetic_dates(r.to_vec(), x.to_vec()).unwrap()
    }

    #[test]
    fn regime_boundary() {
        assert_eq!(regime(-0.5).index(), 1);
        assert_eq!(regime(0.0).index(), 1);
        assert_eq!(regime(0.5).index(), 2);
    }

    #[test]
    fn degenerate_recursion() {
        let s = series(&[0.3, -1.0, 0.5, 2.0], &[1.0, 3.0, 0.2, 1.5]);
        let p = filter_volatility(0.7, 0.0, 0.0, &s);
        assert_eq!(p.log_h[0], s.return_variance().ln());
        assert!(p.log_h[1..].iter().all(|&v| v == 0.7));
    }

    #[test]
    fn fixed_point_with_constant_measure() {
        let n = 200;
        let r: Vec<f64> = (0..n).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = vec![std::f64::consts::E; n];
        let p = filter_volatility(0.1, 0.65, 0.3, &series(&r, &x));
        let fixed = (0.1 + 0.3) / (1.0 - 0.65);
        assert_relative_eq!(fixed, 1.142_857_142_857, epsilon = 1e-12);
        assert!((p.log_h[n - 1] - fixed).abs() < 1e-12);
        let gaps: Vec<f64> = p.log_h.iter().map(|v| (v - fixed).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn hand_recursion_three_steps() {
        let r = [1.0, -1.0, 0.5];
        let s = series(&r, &[1.0, 2.0, 1.0]);
        let p = filter_volatility(0.1, 0.65, 0.3, &s);
        // sample variance of (1, -1, 0.5): mean 1/6
        let var = ((5.0f64 / 6.0).powi(2) + (7.0f64 / 6.0).powi(2) + (2.0f64 / 6.0).powi(2)) / 2.0;
        let lh1 = var.ln();
        let lh2 = 0.1 + 0.65 * lh1 + 0.3 * 0.0;
        let lh3 = 0.1 + 0.65 * lh2 + 0.3 * 2f64.ln();
        assert_relative_eq!(p.log_h[0], lh1, max_relative = 1e-15);
        assert_relative_eq!(p.log_h[1], lh2, max_relative = 1e-15);
        assert_relative_eq!(p.log_h[2], lh3, max_relative = 1e-15);
        assert_relative_eq!(p.h[2], lh3.exp(), max_relative = 1e-15);
    }

    #[test]
    fn stationarity_examples() {
        let p = ParamsRtmg::SIMULATION;
        assert!(p.check_stationarity());
        let (a, b) = p.persistence();
        assert_relative_eq!(a, 0.935, epsilon = 1e-12);
        assert_relative_eq!(b, 0.926, epsilon = 1e-12);

        let bad = ParamsRtmg { beta: 0.9, gamma: 0.5, phi1: 1.0, ..p };
        assert!(!bad.check_stationarity());
        let bad_nu = ParamsRtmg { nu: 4.0, ..p };
        assert!(!bad_nu.check_stationarity());
        assert!(ParamsRtmg { nu: NU_MAX, ..p }.check_stationarity());
        assert!(!ParamsRtmg { nu: NU_MAX + 1e-9, ..p }.check_stationarity());
        let bad_sigma = ParamsRtmg { sigma_eps: 0.0, ..p };
        assert!(!bad_sigma.check_stationarity());
    }

    #[test]
    fn persistence_special_cases() {
        let p = ParamsRtmg { gamma: 0.0, ..ParamsRtmg::SIMULATION };
        assert_eq!(p.persistence(), (0.65, 0.65));
        let q = ParamsRtmg { phi2: 0.95, ..ParamsRtmg::SIMULATION };
        let (a, b) = q.persistence();
        assert_eq!(a, b);
    }

    #[test]
    fn single_observation_likelihood() {
        // n = 2 so the sample variance exists; check the t = 1 term by hand
        // through the difference of two series sharing their first point.
        let s = series(&[0.8, -0.4], &[1.3, 0.9]);
        let p = ParamsRtmg::SIMULATION;
        let nu = p.nu;
        let lh1 = s.return_variance().ln();
        let lh2 = p.omega + p.beta * lh1 + p.gamma * 1.3f64.ln();
        let t_term = |r: f64, lh: f64| {
            -(ln_t_norm(nu) + 0.5 * lh + 0.5 * (nu + 1.0) * (1.0 + r * r / (lh.exp() * (nu - 2.0))).ln())
        };
        let n_term = |e: f64| -0.5 * (LN_2PI + (p.sigma_eps * p.sigma_eps).ln() + e * e / (p.sigma_eps * p.sigma_eps));
        // t = 1 uses regime 1; t = 2 follows r_1 = 0.8 > 0, regime 2
        let e1 = 1.3f64.ln() - p.xi1 - p.phi1 * lh1;
        let e2 = 0.9f64.ln() - p.xi2 - p.phi2 * lh2;
        let expected = t_term(0.8, lh1) + t_term(-0.4, lh2) + n_term(e1) + n_term(e2);
        assert_relative_eq!(loglik_rtmg(&p, &s), expected, max_relative = 1e-13);
    }

    #[test]
    fn rg_likelihood_by_hand() {
        let s = series(&[0.8, -0.4], &[1.3, 0.9]);
        let p = ParamsRg {
            omega: 0.1,
            beta: 0.6,
            gamma: 0.3,
            xi: -0.3,
            phi: 0.9,
            tau1: 0.0,
            tau2: 0.0,
            sigma_eps: 0.5,
            nu: 8.0,
        };
        let nu = p.nu;
        let lh1 = s.return_variance().ln();
        let lh2 = p.omega + p.beta * lh1 + p.gamma * 1.3f64.ln();
        let t_term = |r: f64, lh: f64| {
            -(ln_t_norm(nu) + 0.5 * lh + 0.5 * (nu + 1.0) * (1.0 + r * r / (lh.exp() * (nu - 2.0))).ln())
        };
        let n_term = |e: f64| -0.5 * (LN_2PI + (p.sigma_eps * p.sigma_eps).ln() + e * e / (p.sigma_eps * p.sigma_eps));
        let e1 = 1.3f64.ln() - p.xi - p.phi * lh1;
        let e2 = 0.9f64.ln() - p.xi - p.phi * lh2;
        let expected = t_term(0.8, lh1) + t_term(-0.4, lh2) + n_term(e1) + n_term(e2);
        assert_relative_eq!(loglik_rg(&p, &s), expected, max_relative = 1e-13);
    }

    #[test]
    fn likelihood_is_neg_infinity_outside_region() {
        let s = series(&[0.8, -0.4, 0.1], &[1.3, 0.9, 1.0]);
        let p = ParamsRtmg { nu: 3.5, ..ParamsRtmg::SIMULATION };
        assert_eq!(loglik_rtmg(&p, &s), f64::NEG_INFINITY);
        let q = ParamsRtmg { beta: 0.99, ..ParamsRtmg::SIMULATION };
        assert_eq!(loglik_rtmg(&q, &s), f64::NEG_INFINITY);
        assert!(loglik_rtmg(&ParamsRtmg::SIMULATION, &s).is_finite());
    }

    #[test]
    fn date_shift_leaves_likelihood_unchanged() {
        let s = series(&[0.8, -0.4, 0.1, 1.1], &[1.3, 0.9, 1.0, 0.4]);
        let p = ParamsRg {
            omega: 0.05,
            beta: 0.5,
            gamma: 0.4,
            xi: -0.2,
            phi: 1.0,
            tau1: -0.1,
            tau2: 0.05,
            sigma_eps: 0.4,
            nu: 7.0,
        };
        assert_eq!(loglik_rg(&p, &s), loglik_rg(&p, &s.shift_dates(365)));
    }

    #[test]
    fn series_validation() {
        assert!(JointSeries::with_synthetic_dates(vec![0.1], vec![1.0]).is_err());
        assert!(JointSeries::with_synthetic_dates(vec![0.1, 0.2], vec![1.0]).is_err());
        assert!(JointSeries::with_synthetic_dates(vec![0.1, 0.2], vec![1.0, 0.0]).is_err());
        assert!(JointSeries::with_synthetic_dates(vec![0.1, f64::NAN], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RTMG".parse::<ModelKind>().unwrap(), ModelKind::Rtmg);
        assert_eq!("rg".parse::<ModelKind>().unwrap(), ModelKind::Rg);
        assert!("egarch".parse::<ModelKind>().is_err());
    }
}
