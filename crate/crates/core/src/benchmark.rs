//! GJR-GARCH-t and EGARCH-t fitted by maximum likelihood, with parametric and
//! filtered historical-simulation tail forecasts.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{ln_t_norm, var_es, StdT};
use crate::error::{Error, Result};
use crate::model::{sample_variance, NU_MAX};
use crate::optim::NelderMead;

/// Added to the objective outside the constraint region.
pub const PENALTY: f64 = 1e8;
pub const RESTARTS: usize = 5;
pub const MIN_OBS: usize = 100;

const RESTART_SEED: u64 = 0x5eed_6a72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Gjr,
    Egarch,
}

impl BenchmarkKind {
    pub fn id(self) -> &'static str {
        match self {
            BenchmarkKind::Gjr => "gjr-t",
            BenchmarkKind::Egarch => "egarch-t",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gjr-t" | "gjr" => Ok(BenchmarkKind::Gjr),
            "egarch-t" | "egarch" => Ok(BenchmarkKind::Egarch),
            other => Err(Error::Config(format!("unknown benchmark model '{other}'"))),
        }
    }
}

/// `h_t = omega + beta h_{t-1} + (gamma + alpha I_{t-1}) r_{t-1}^2`, `I = 1` when `r <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsGjr {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub nu: f64,
}

impl ParamsGjr {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self { omega: a[0], beta: a[1], gamma: a[2], alpha: a[3], nu: a[4] }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.omega, self.beta, self.gamma, self.alpha, self.nu]
    }

    pub fn persistence(&self) -> f64 {
        self.gamma + 0.5 * self.alpha + self.beta
    }

    /// `gamma + alpha >= 0` keeps the news impact non-negative after a loss.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.omega > 0.0
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && self.gamma + self.alpha >= 0.0
            && self.persistence() < 1.0
            && self.nu > 4.0
            && self.nu <= NU_MAX
    }

    fn violation(&self) -> f64 {
        let mut v = 0.0;
        v += (-self.omega).max(0.0) + (-self.beta).max(0.0) + (-self.gamma).max(0.0);
        v += (-(self.gamma + self.alpha)).max(0.0);
        v += (self.persistence() - 1.0).max(0.0);
        v += (4.0 - self.nu).max(0.0) + (self.nu - NU_MAX).max(0.0);
        v
    }

    /// Conditional variances for `returns`, plus the one-step-ahead value.
    pub fn filter(&self, returns: &[f64]) -> (Vec<f64>, f64) {
        let mut h = Vec::with_capacity(returns.len());
        let mut cur = sample_variance(returns);
        for &r in returns {
            h.push(cur);
            let lev = if r <= 0.0 { self.alpha } else { 0.0 };
            cur = self.omega + self.beta * cur + (self.gamma + lev) * r * r;
        }
        (h, cur)
    }

    pub fn loglik(&self, returns: &[f64]) -> f64 {
        if !self.is_valid() {
            return f64::NEG_INFINITY;
        }
        let (h, _) = self.filter(returns);
        t_loglik(returns, &h, self.nu)
    }

    pub fn simulate(&self, n: usize, burn: usize, seed: u64) -> Result<Vec<f64>> {
        if !self.is_valid() {
            return Err(Error::domain(format!("GJR parameters outside the valid region: {self:?}")));
        }
        let dist = StdT::new(self.nu)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = self.omega / (1.0 - self.persistence());
        let mut out = Vec::with_capacity(n);
        for t in 0..n + burn {
            let r = h.sqrt() * dist.sample(&mut rng);
            if t >= burn {
                out.push(r);
            }
            let lev = if r <= 0.0 { self.alpha } else { 0.0 };
            h = self.omega + self.beta * h + (self.gamma + lev) * r * r;
        }
        Ok(out)
    }
}

/// `log h_t = omega + beta log h_{t-1} + tau1 z_{t-1} + tau2 (|z_{t-1}| - E|z|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsEgarch {
    pub omega: f64,
    pub beta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub nu: f64,
}

impl ParamsEgarch {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self { omega: a[0], beta: a[1], tau1: a[2], tau2: a[3], nu: a[4] }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.omega, self.beta, self.tau1, self.tau2, self.nu]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.beta.abs() < 1.0 && self.nu > 4.0 && self.nu <= NU_MAX
    }

    fn violation(&self) -> f64 {
        (self.beta.abs() - 1.0).max(0.0) + (4.0 - self.nu).max(0.0) + (self.nu - NU_MAX).max(0.0)
    }

    pub fn filter(&self, returns: &[f64]) -> (Vec<f64>, f64) {
        let e_abs = StdT::new(self.nu).map(|d| d.mean_abs()).unwrap_or(f64::NAN);
        let mut h = Vec::with_capacity(returns.len());
        let mut log_h = sample_variance(returns).ln();
        for &r in returns {
            let cur = log_h.exp();
            h.push(cur);
            let z = r / cur.sqrt();
            log_h = self.omega + self.beta * log_h + self.tau1 * z + self.tau2 * (z.abs() - e_abs);
        }
        (h, log_h.exp())
    }

    pub fn loglik(&self, returns: &[f64]) -> f64 {
        if !self.is_valid() {
            return f64::NEG_INFINITY;
        }
        let (h, _) = self.filter(returns);
        t_loglik(returns, &h, self.nu)
    }

    pub fn simulate(&self, n: usize, burn: usize, seed: u64) -> Result<Vec<f64>> {
        if !self.is_valid() {
            return Err(Error::domain(format!("EGARCH parameters outside the valid region: {self:?}")));
        }
        let dist = StdT::new(self.nu)?;
        let e_abs = dist.mean_abs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log_h = self.omega / (1.0 - self.beta);
        let mut out = Vec::with_capacity(n);
        for t in 0..n + burn {
            let z = dist.sample(&mut rng);
            if t >= burn {
                out.push((0.5 * log_h).exp() * z);
            }
            log_h = self.omega + self.beta * log_h + self.tau1 * z + self.tau2 * (z.abs() - e_abs);
        }
        Ok(out)
    }
}

fn t_loglik(returns: &[f64], h: &[f64], nu: f64) -> f64 {
    let c = 1.0 / (nu - 2.0);
    let mut s = 0.0;
    for (&r, &h) in returns.iter().zip(h) {
        s += 0.5 * h.ln() + 0.5 * (nu + 1.0) * (r * r / h * c).ln_1p();
    }
    let l = -(returns.len() as f64 * ln_t_norm(nu) + s);
    if l.is_finite() {
        l
    } else {
        f64::NEG_INFINITY
    }
}

/// A fitted benchmark with its in-sample variance path.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkFit<P> {
    pub params: P,
    pub loglik: f64,
    pub h: Vec<f64>,
    pub h_next: f64,
    pub evals: usize,
}

trait Spec: Copy {
    fn from_vec(x: &[f64]) -> Self;
    fn to_vec(&self) -> Vec<f64>;
    fn violation(&self) -> f64;
    fn loglik(&self, r: &[f64]) -> f64;
    fn filter(&self, r: &[f64]) -> (Vec<f64>, f64);
    fn perturb(&self, rng: &mut ChaCha8Rng) -> Self;
    fn steps(&self) -> Vec<f64>;
}

impl Spec for ParamsGjr {
    fn from_vec(x: &[f64]) -> Self {
        Self::from_array([x[0], x[1], x[2], x[3], x[4]])
    }
    fn to_vec(&self) -> Vec<f64> {
        self.to_array().to_vec()
    }
    fn violation(&self) -> f64 {
        ParamsGjr::violation(self)
    }
    fn loglik(&self, r: &[f64]) -> f64 {
        ParamsGjr::loglik(self, r)
    }
    fn filter(&self, r: &[f64]) -> (Vec<f64>, f64) {
        ParamsGjr::filter(self, r)
    }
    fn perturb(&self, rng: &mut ChaCha8Rng) -> Self {
        let mut m = |v: f64| v * rng.random_range(0.5f64..1.5);
        let mut p = Self {
            omega: m(self.omega),
            beta: m(self.beta),
            gamma: m(self.gamma),
            alpha: m(self.alpha),
            nu: m(self.nu).max(4.5),
        };
        // pull back toward stationarity if the draw overshot
        while p.persistence() >= 0.995 {
            p.beta *= 0.95;
        }
        p
    }
    fn steps(&self) -> Vec<f64> {
        vec![0.2 * self.omega.abs().max(1e-4), 0.05, 0.02, 0.02, 1.0]
    }
}

impl Spec for ParamsEgarch {
    fn from_vec(x: &[f64]) -> Self {
        Self::from_array([x[0], x[1], x[2], x[3], x[4]])
    }
    fn to_vec(&self) -> Vec<f64> {
        self.to_array().to_vec()
    }
    fn violation(&self) -> f64 {
        ParamsEgarch::violation(self)
    }
    fn loglik(&self, r: &[f64]) -> f64 {
        ParamsEgarch::loglik(self, r)
    }
    fn filter(&self, r: &[f64]) -> (Vec<f64>, f64) {
        ParamsEgarch::filter(self, r)
    }
    fn perturb(&self, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self {
            omega: self.omega + rng.random_range(-0.05..0.05),
            beta: (self.beta * rng.random_range(0.9..1.02)).min(0.995),
            tau1: self.tau1 * rng.random_range(0.5..1.5),
            tau2: self.tau2 * rng.random_range(0.5..1.5),
            nu: (self.nu * rng.random_range(0.5..1.5)).max(4.5),
        };
        p.beta = p.beta.max(0.0);
        p
    }
    fn steps(&self) -> Vec<f64> {
        vec![0.05, 0.02, 0.02, 0.03, 1.0]
    }
}

fn objective<P: Spec>(x: &[f64], returns: &[f64]) -> f64 {
    let p = P::from_vec(x);
    let v = p.violation();
    if v > 0.0 {
        return PENALTY * (1.0 + v);
    }
    let l = p.loglik(returns);
    if l.is_finite() {
        -l
    } else {
        PENALTY
    }
}

fn fit<P: Spec>(returns: &[f64], base: P, name: &str) -> Result<BenchmarkFit<P>> {
    if returns.len() < MIN_OBS {
        return Err(Error::InsufficientData(format!("{name} needs at least {MIN_OBS} returns, got {}", returns.len())));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::data("returns must be finite"));
    }
    if !(sample_variance(returns) > 0.0) {
        return Err(Error::data("returns have zero sample variance"));
    }

    let nm = NelderMead::default();
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let mut starts = vec![base];
    starts.extend((0..RESTARTS).map(|_| base.perturb(&mut rng)));

    let mut evals = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let m = nm.minimize(|x| objective::<P>(x, returns), &start.to_vec(), &start.steps());
        evals += m.evals;
        if best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f));
        }
    }
    let (mut x, mut f) = best.expect("at least one start");

    // restart from the incumbent until a fresh simplex stops improving
    for _ in 0..20 {
        let p = P::from_vec(&x);
        let m = nm.minimize(|y| objective::<P>(y, returns), &x, &p.steps());
        evals += m.evals;
        let gain = f - m.f;
        if m.f < f {
            x = m.x;
            f = m.f;
        }
        if gain < 1e-9 {
            break;
        }
    }

    if !(f < PENALTY) {
        return Err(Error::Estimation(format!(
            "{name}: no feasible optimum after {} starts ({evals} evaluations); last point {x:?}",
            starts.len()
        )));
    }
    let params = P::from_vec(&x);
    let (h, h_next) = params.filter(returns);
    Ok(BenchmarkFit { params, loglik: -f, h, h_next, evals })
}

pub fn gjr_initial(returns: &[f64]) -> ParamsGjr {
    let var = sample_variance(returns);
    ParamsGjr { omega: 0.08 * var, beta: 0.85, gamma: 0.03, alpha: 0.08, nu: 8.0 }
}

pub fn egarch_initial(returns: &[f64]) -> ParamsEgarch {
    let beta = 0.95;
    ParamsEgarch { omega: (1.0 - beta) * sample_variance(returns).ln(), beta, tau1: -0.05, tau2: 0.15, nu: 8.0 }
}

/// Maximum-likelihood GJR-GARCH with standardized t errors.
pub fn fit_gjr_t(returns: &[f64], init: Option<ParamsGjr>) -> Result<BenchmarkFit<ParamsGjr>> {
    let base = match init {
        Some(p) if p.is_valid() => p,
        Some(p) => return Err(Error::Config(format!("GJR initial values outside the valid region: {p:?}"))),
        None => gjr_initial(returns),
    };
    fit(returns, base, "GJR-t")
}

/// Maximum-likelihood EGARCH with standardized t errors.
pub fn fit_egarch_t(returns: &[f64], init: Option<ParamsEgarch>) -> Result<BenchmarkFit<ParamsEgarch>> {
    let base = match init {
        Some(p) if p.is_valid() => p,
        Some(p) => return Err(Error::Config(format!("EGARCH initial values outside the valid region: {p:?}"))),
        None => egarch_initial(returns),
    };
    fit(returns, base, "EGARCH-t")
}

pub fn parametric_var_es(nu: f64, h_next: f64, alpha: f64) -> Result<(f64, f64)> {
    var_es(h_next, nu, alpha)
}

/// Lower empirical quantile: the `ceil(n alpha)`-th order statistic.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    let k = order_index(sorted.len(), alpha)?;
    Ok(sorted[k])
}

fn order_index(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    // tolerate representation error in n * alpha, e.g. 100 * 0.01
    let na = n as f64 * alpha;
    if na < 1.0 - 1e-9 {
        return Err(Error::InsufficientData(format!("{n} observations are fewer than 1/alpha = {:.1}", 1.0 / alpha)));
    }
    let k = (na - 1e-9).ceil() as usize;
    Ok(k.clamp(1, n) - 1)
}

/// Filtered historical simulation from standardized residuals `r_t / sqrt(h_t)`.
pub fn hs_var_es(returns: &[f64], h: &[f64], h_next: f64, alpha: f64) -> Result<(f64, f64)> {
    if returns.len() != h.len() {
        return Err(Error::data(format!("{} returns but {} variances", returns.len(), h.len())));
    }
    if !(h_next > 0.0) || h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("variances must be positive"));
    }
    let mut s: Vec<f64> = returns.iter().zip(h).map(|(r, h)| r / h.sqrt()).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("standardized residuals must be finite"));
    }
    s.sort_by(f64::total_cmp);
    let k = order_index(s.len(), alpha)?;
    let q = s[k];
    // everything up to and including index k is <= q, as are any ties above it
    let tail: Vec<f64> = s.iter().copied().take_while(|&v| v <= q).collect();
    let es = tail.iter().sum::<f64>() / tail.len() as f64;
    let scale = h_next.sqrt();
    Ok((q * scale, es * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hs_hand_example() {
        let (v, e) = hs_var_es(&[-2.0, -1.0, 0.0, 1.0], &[1.0; 4], 1.0, 0.25).unwrap();
        assert_eq!((v, e), (-2.0, -2.0));
        let (v4, e4) = hs_var_es(&[-2.0, -1.0, 0.0, 1.0], &[1.0; 4], 4.0, 0.25).unwrap();
        assert_eq!((v4, e4), (2.0 * v, 2.0 * e));
    }

    #[test]
    fn hs_constant_sample() {
        let r = vec![-0.7; 200];
        let (v, e) = hs_var_es(&r, &[1.0; 200], 2.25, 0.01).unwrap();
        assert_relative_eq!(v, -1.05, max_relative = 1e-14);
        assert_relative_eq!(e, -1.05, max_relative = 1e-14);
    }

    #[test]
    fn hs_needs_enough_observations() {
        let r = vec![0.1; 99];
        assert!(matches!(hs_var_es(&r, &[1.0; 99], 1.0, 0.01), Err(Error::InsufficientData(_))));
        let r = vec![0.1; 100];
        assert!(hs_var_es(&r, &[1.0; 100], 1.0, 0.01).is_ok());
    }

    #[test]
    fn empirical_quantile_uses_lower_order_statistic() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&s, 0.1).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&s, 0.11).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&s, 0.25).unwrap(), 3.0);
    }

    #[test]
    fn gjr_without_leverage_is_garch() {
        let p = ParamsGjr { omega: 0.05, beta: 0.9, gamma: 0.05, alpha: 0.0, nu: 7.0 };
        let r = p.simulate(300, 100, 1).unwrap();
        let (h, _) = p.filter(&r);
        let mut g = sample_variance(&r);
        for (t, &ht) in h.iter().enumerate() {
            assert_eq!(ht, g);
            g = 0.05 + 0.9 * g + 0.05 * r[t] * r[t];
        }
    }

    #[test]
    fn gjr_validity() {
        let p = ParamsGjr { omega: 0.05, beta: 0.85, gamma: 0.05, alpha: 0.1, nu: 7.0 };
        assert!(p.is_valid());
        assert!(!ParamsGjr { beta: 0.9, ..p }.is_valid());
        assert!(!ParamsGjr { omega: 0.0, ..p }.is_valid());
        assert!(!ParamsGjr { nu: 4.0, ..p }.is_valid());
        assert!(p.loglik(&[0.1; 200]).is_finite());
        assert_eq!(ParamsGjr { nu: 4.0, ..p }.loglik(&[0.1; 200]), f64::NEG_INFINITY);
    }

    #[test]
    fn egarch_filter_is_finite_for_extreme_returns() {
        let p = ParamsEgarch { omega: 0.0, beta: 0.98, tau1: -0.1, tau2: 0.2, nu: 6.0 };
        let r = [1e3, -1e3, 0.0, 1e-12, -5.0];
        let mut series = r.to_vec();
        series.extend(std::iter::repeat_n(0.5, 50));
        let (h, next) = p.filter(&series);
        assert!(h.iter().all(|v| v.is_finite() && *v > 0.0) && next.is_finite());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("GJR-t".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Gjr);
        assert_eq!("egarch-t".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Egarch);
        assert!("garch".parse::<BenchmarkKind>().is_err());
    }

    #[test]
    fn short_samples_are_rejected() {
        assert!(matches!(fit_gjr_t(&[0.1; 50], None), Err(Error::InsufficientData(_))));
    }
}
