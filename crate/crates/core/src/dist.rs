//! Standardized error distributions and closed-form tail functionals.
//!
//! Returns are modelled as `r = sqrt(h) * z` where `z` is a Student-t variate
//! rescaled to unit variance. Everything here works with the *unscaled*
//! Student-t internally (`t_pdf`, `t_cdf`, `t_inv`) and applies the factor
//! `sqrt((nu - 2) / nu)` at the edges.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const INV_TOL: f64 = 1e-12;
const INV_MAX_ITER: usize = 200;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Above this many degrees of freedom the incomplete-beta continued fraction
/// converges slowly; the Cornish-Fisher expansion around the normal is exact
/// to double precision there.
const LARGE_NU: f64 = 1e5;

/// Student-t with `nu` degrees of freedom, rescaled to unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdT {
    nu: f64,
}

impl StdT {
    /// Requires `nu > 4` so that the first four moments exist.
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu <= 4.0 {
            return Err(Error::domain(format!("standardized t requires nu > 4, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `sqrt((nu - 2) / nu)`, the factor mapping a raw t variate to unit variance.
    pub fn scale(&self) -> f64 {
        ((self.nu - 2.0) / self.nu).sqrt()
    }

    pub fn pdf(&self, z: f64) -> f64 {
        let s = self.scale();
        t_pdf(z / s, self.nu) / s
    }

    pub fn ln_pdf(&self, z: f64) -> f64 {
        let nu = self.nu;
        -ln_t_norm(nu) - 0.5 * (nu + 1.0) * (1.0 + z * z / (nu - 2.0)).ln()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        t_cdf_unchecked(z / self.scale(), self.nu)
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        Ok(t_inv(alpha, self.nu)? * self.scale())
    }

    /// `E|z|` for the unit-variance variate.
    pub fn mean_abs(&self) -> f64 {
        let nu = self.nu;
        2.0 * (nu - 2.0).sqrt() / (PI.sqrt() * (nu - 1.0)) * (ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu)).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // nu > 4 was checked at construction
        let t = StudentT::new(self.nu).expect("valid degrees of freedom");
        t.sample(rng) * self.scale()
    }
}

/// Standard normal, used for the measurement-equation error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StdNormal;

impl StdNormal {
    pub fn ln_pdf(&self, z: f64) -> f64 {
        -0.5 * (LN_2PI + z * z)
    }

    pub fn pdf(&self, z: f64) -> f64 {
        self.ln_pdf(z).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }
}

/// `A(nu) = -ln G((nu+1)/2) + 0.5 ln(pi (nu-2)) + ln G(nu/2)`: the negative log
/// normalizing constant of the unit-variance t density.
pub fn ln_t_norm(nu: f64) -> f64 {
    -ln_gamma(0.5 * (nu + 1.0)) + 0.5 * (PI * (nu - 2.0)).ln() + ln_gamma(0.5 * nu)
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 2.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("degrees of freedom must exceed 2, got {nu}")))
    }
}

/// Density of the raw Student-t with `nu` degrees of freedom.
pub fn t_pdf(z: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (1.0 + z * z / nu).ln()).exp()
}

/// CDF of the raw Student-t. Errors on non-finite `z` or `nu <= 2`.
pub fn t_cdf(z: f64, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if !z.is_finite() {
        return Err(Error::domain(format!("t_cdf argument must be finite, got {z}")));
    }
    Ok(t_cdf_unchecked(z, nu))
}

fn t_cdf_unchecked(z: f64, nu: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let z2 = z * z;
    // lower-tail mass 0.5 * I_{nu/(nu+z^2)}(nu/2, 1/2)
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + z2), z2 / (nu + z2));
    if z > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta `I_x(a, b)`, with `y = 1 - x` supplied by the
/// caller so that neither tail loses digits to cancellation.
fn beta_reg(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - beta_reg(b, a, y, x);
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    ln_front.exp() * beta_cf(a, b, x) / a
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 10_000;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Quantile of the raw Student-t.
///
/// Newton iterations on the CDF, safeguarded by a bisection bracket; stops when
/// the step falls below `1e-12 * max(1, |z|)` or after 200 iterations.
pub fn t_inv(alpha: f64, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("probability must lie in (0, 1), got {alpha}")));
    }
    if alpha == 0.5 {
        return Ok(0.0);
    }
    if alpha > 0.5 {
        return t_inv(1.0 - alpha, nu).map(|q| -q);
    }
    if nu > LARGE_NU {
        return Ok(cornish_fisher_t(alpha, nu));
    }

    // lower tail: the root is negative
    let mut hi = 0.0;
    let mut lo = -1.0;
    while t_cdf_unchecked(lo, nu) > alpha {
        hi = lo;
        lo *= 2.0;
        if lo < -1e300 {
            return Err(Error::domain("t_inv: failed to bracket quantile"));
        }
    }

    let mut z = 0.5 * (lo + hi);
    for _ in 0..INV_MAX_ITER {
        let f = t_cdf_unchecked(z, nu) - alpha;
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = t_pdf(z, nu);
        let mut next = z - f / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - z).abs();
        z = next;
        if step <= INV_TOL * z.abs().max(1.0) {
            return Ok(z);
        }
    }
    Ok(z)
}

/// Normal quantile refined with the Cornish-Fisher series in `1/nu`.
fn cornish_fisher_t(alpha: f64, nu: f64) -> f64 {
    let x = normal_quantile(alpha);
    let x2 = x * x;
    let g1 = (x2 + 1.0) * x / 4.0;
    let g2 = ((5.0 * x2 + 16.0) * x2 + 3.0) * x / 96.0;
    let g3 = (((3.0 * x2 + 19.0) * x2 + 17.0) * x2 - 15.0) * x / 384.0;
    x + g1 / nu + g2 / (nu * nu) + g3 / (nu * nu * nu)
}

/// Standard normal quantile via Acklam's rational approximation with one
/// Halley refinement step.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn check_tail_args(h_next: f64, nu: f64, alpha: f64) -> Result<()> {
    if !(h_next.is_finite() && h_next > 0.0) {
        return Err(Error::domain(format!("variance forecast must be positive, got {h_next}")));
    }
    if !(nu.is_finite() && nu > 4.0) {
        return Err(Error::domain(format!("tail functionals require nu > 4, got {nu}")));
    }
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::domain(format!("tail level must lie in (0, 0.5], got {alpha}")));
    }
    Ok(())
}

/// One-step-ahead VaR: `sqrt(h) * t_inv(alpha, nu) * sqrt((nu-2)/nu)`.
pub fn var_quantile(h_next: f64, nu: f64, alpha: f64) -> Result<f64> {
    check_tail_args(h_next, nu, alpha)?;
    let q = t_inv(alpha, nu)?;
    Ok(h_next.sqrt() * q * ((nu - 2.0) / nu).sqrt())
}

/// One-step-ahead ES, the mean return conditional on falling below the VaR.
pub fn es_tail(h_next: f64, nu: f64, alpha: f64) -> Result<f64> {
    check_tail_args(h_next, nu, alpha)?;
    let q = t_inv(alpha, nu)?;
    Ok(es_from_raw_quantile(h_next, nu, alpha, q))
}

/// Both tail functionals sharing a single quantile inversion.
pub fn var_es(h_next: f64, nu: f64, alpha: f64) -> Result<(f64, f64)> {
    check_tail_args(h_next, nu, alpha)?;
    let q = t_inv(alpha, nu)?;
    let var = h_next.sqrt() * q * ((nu - 2.0) / nu).sqrt();
    Ok((var, es_from_raw_quantile(h_next, nu, alpha, q)))
}

fn es_from_raw_quantile(h_next: f64, nu: f64, alpha: f64, q: f64) -> f64 {
    -h_next.sqrt() * (t_pdf(q, nu) / alpha) * ((nu + q * q) / (nu - 1.0)) * ((nu - 2.0) / nu).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_symmetry_at_zero() {
        assert_eq!(t_cdf(0.0, 10.0).unwrap(), 0.5);
    }

    #[test]
    fn inverse_is_antisymmetric() {
        let lo = t_inv(0.01, 10.0).unwrap();
        let hi = t_inv(1.0 - 0.01, 10.0).unwrap();
        // 1 - 0.99 is not exactly 0.01 in binary
        assert_relative_eq!(lo, -hi, max_relative = 1e-12);
    }

    #[test]
    fn inverse_rejects_bad_probability() {
        for a in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(t_inv(a, 10.0), Err(Error::Domain(_))));
        }
        assert!(t_cdf(f64::INFINITY, 10.0).is_err());
        assert!(t_cdf(0.3, 2.0).is_err());
    }

    #[test]
    fn roundtrip_on_grid() {
        // Upper-tail probabilities near 1 carry too few significant bits to
        // pin z to 1e-10; the lower half plus exact antisymmetry covers [-8, 8].
        for &nu in &[4.5, 6.0, 10.0, 30.0, 200.0] {
            let mut z = -8.0;
            while z <= 0.0 {
                let p = t_cdf(z, nu).unwrap();
                let back = t_inv(p, nu).unwrap();
                assert!((back - z).abs() <= 1e-10 * z.abs().max(1.0), "nu={nu} z={z} back={back}");
                assert_relative_eq!(t_cdf(-z, nu).unwrap(), 1.0 - t_cdf(z, nu).unwrap(), max_relative = 1e-14);
                z += 0.25;
            }
        }
    }

    #[test]
    fn gaussian_limit() {
        let v = var_quantile(1.0, 1e6, 0.025).unwrap();
        assert_relative_eq!(v, -1.959_963_985, epsilon = 1e-5);
        let e = es_tail(1.0, 1e6, 0.025).unwrap();
        assert_relative_eq!(e, -2.337_802_5, epsilon = 1e-4);
    }

    #[test]
    fn scale_homogeneity() {
        for &a in &[0.01, 0.025, 0.3] {
            let v1 = var_quantile(1.0, 7.0, a).unwrap();
            let v4 = var_quantile(4.0, 7.0, a).unwrap();
            assert_relative_eq!(v4, 2.0 * v1, max_relative = 1e-14);
            let e1 = es_tail(1.0, 7.0, a).unwrap();
            let e4 = es_tail(4.0, 7.0, a).unwrap();
            assert_relative_eq!(e4, 2.0 * e1, max_relative = 1e-14);
        }
    }

    #[test]
    fn es_below_var() {
        for &a in &[0.01, 0.025] {
            let v = var_quantile(1.0, 10.0, a).unwrap();
            let e = es_tail(1.0, 10.0, a).unwrap();
            assert!(e < v && v < 0.0);
            assert!(e / v > 1.0);
        }
    }

    #[test]
    fn tail_functionals_reject_bad_inputs() {
        assert!(var_quantile(0.0, 10.0, 0.01).is_err());
        assert!(var_quantile(-1.0, 10.0, 0.01).is_err());
        assert!(es_tail(1.0, 4.0, 0.01).is_err());
        assert!(es_tail(1.0, 10.0, 0.6).is_err());
    }

    #[test]
    fn std_t_requires_nu_above_four() {
        assert!(StdT::new(4.0).is_err());
        assert!(StdT::new(4.0001).is_ok());
    }

    #[test]
    fn ln_pdf_matches_scaled_raw_density() {
        let d = StdT::new(7.5).unwrap();
        for &z in &[-3.0, -0.4, 0.0, 1.7] {
            assert_relative_eq!(d.ln_pdf(z), d.pdf(z).ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn mean_abs_gaussian_limit() {
        let d = StdT::new(1e6).unwrap();
        assert_relative_eq!(d.mean_abs(), (2.0 / PI).sqrt(), max_relative = 1e-5);
    }

    #[test]
    fn normal_quantile_accuracy() {
        for &p in &[1e-8, 0.001, 0.025, 0.3, 0.5, 0.9] {
            let x = normal_quantile(p);
            assert_relative_eq!(normal_cdf(x), p, max_relative = 1e-12);
        }
    }
}
