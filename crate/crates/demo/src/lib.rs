//! Browser demo helpers: tail curves, a simulated path with its VaR band and
//! loss surfaces. The plain functions are usable natively; the `wasm` module
//! re-exports them through wasm-bindgen on `wasm32` targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtmg_core::dist::{var_es, StdT};
use rtmg_core::model::ParamsRtmg;
use rtmg_core::risk::{al_joint_loss, quantile_loss};
use rtmg_core::sim::simulate_rtmg;
use rtmg_core::Result;

/// VaR and ES at each alpha, interleaved as `[var_0, es_0, var_1, es_1, ...]`.
pub fn tail_curve(nu: f64, h_next: f64, alphas: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * alphas.len());
    for &a in alphas {
        let (v, e) = var_es(h_next, nu, a)?;
        out.extend([v, e]);
    }
    Ok(out)
}

/// A path from the reference design with `nu` replaced, laid out as four
/// consecutive blocks of length `n`: returns, realized measure, conditional
/// variance and the one-step VaR at `alpha`.
pub fn simulated_band(n: usize, nu: f64, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    let params = ParamsRtmg { nu, ..ParamsRtmg::SIMULATION };
    let sim = simulate_rtmg(&params, n, 500, seed)?;
    let mut out = Vec::with_capacity(4 * n);
    out.extend_from_slice(sim.series.returns());
    out.extend_from_slice(sim.series.realized());
    out.extend_from_slice(&sim.h);
    for &h in &sim.h {
        out.push(var_es(h, nu, alpha)?.0);
    }
    Ok(out)
}

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

fn t_draws(nu: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let t = StdT::new(nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draws).map(|_| t.sample(&mut rng)).collect())
}

/// Average quantile loss of `draws` unit-variance t variates at each of `k`
/// evenly spaced quantile candidates on `[lo, hi]`.
pub fn quantile_landscape(
    nu: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    k: usize,
) -> Result<Vec<f64>> {
    let r = t_draws(nu, draws, seed)?;
    grid(lo, hi, k).into_iter().map(|q| quantile_loss(&r, &vec![q; r.len()], alpha)).collect()
}

/// Average joint VaR/ES loss on a `kq` by `ke` grid, row-major in the VaR
/// coordinate. Cells with `es > var` are `NaN`.
pub fn joint_landscape(
    nu: f64,
    alpha: f64,
    draws: usize,
    seed: u64,
    q_range: (f64, f64, usize),
    e_range: (f64, f64, usize),
) -> Result<Vec<f64>> {
    let r = t_draws(nu, draws, seed)?;
    let qs = grid(q_range.0, q_range.1, q_range.2);
    let es = grid(e_range.0, e_range.1, e_range.2);
    let mut out = Vec::with_capacity(qs.len() * es.len());
    for &q in &qs {
        let qv = vec![q; r.len()];
        for &e in &es {
            if e > q {
                out.push(f64::NAN);
            } else {
                out.push(al_joint_loss(&r, &qv, &vec![e; r.len()], alpha)?);
            }
        }
    }
    Ok(out)
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(e: rtmg_core::Error) -> JsError {
        JsError::new(&e.to_string())
    }

    #[wasm_bindgen(js_name = tailCurve)]
    pub fn tail_curve(nu: f64, h_next: f64, alphas: Vec<f64>) -> Result<Vec<f64>, JsError> {
        super::tail_curve(nu, h_next, &alphas).map_err(js)
    }

    #[wasm_bindgen(js_name = simulatedBand)]
    pub fn simulated_band(n: usize, nu: f64, alpha: f64, seed: u32) -> Result<Vec<f64>, JsError> {
        super::simulated_band(n, nu, alpha, seed.into()).map_err(js)
    }

    #[wasm_bindgen(js_name = quantileLandscape)]
    pub fn quantile_landscape(
        nu: f64,
        alpha: f64,
        draws: usize,
        seed: u32,
        lo: f64,
        hi: f64,
        k: usize,
    ) -> Result<Vec<f64>, JsError> {
        super::quantile_landscape(nu, alpha, draws, seed.into(), lo, hi, k).map_err(js)
    }

    #[allow(clippy::too_many_arguments)]
    #[wasm_bindgen(js_name = jointLandscape)]
    pub fn joint_landscape(
        nu: f64,
        alpha: f64,
        draws: usize,
        seed: u32,
        q_lo: f64,
        q_hi: f64,
        kq: usize,
        e_lo: f64,
        e_hi: f64,
        ke: usize,
    ) -> Result<Vec<f64>, JsError> {
        super::joint_landscape(nu, alpha, draws, seed.into(), (q_lo, q_hi, kq), (e_lo, e_hi, ke)).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_curve_orders_es_below_var() {
        let c = tail_curve(10.0, 1.5, &[0.01, 0.025, 0.05]).unwrap();
        assert_eq!(c.len(), 6);
        for p in c.chunks(2) {
            assert!(p[1] < p[0] && p[0] < 0.0);
        }
        assert!(c[0] < c[2] && c[2] < c[4]);
        assert!(tail_curve(3.0, 1.0, &[0.01]).is_err());
    }

    #[test]
    fn band_blocks_line_up() {
        let n = 200;
        let v = simulated_band(n, 10.0, 0.01, 7).unwrap();
        assert_eq!(v.len(), 4 * n);
        let (h, var) = (&v[2 * n..3 * n], &v[3 * n..]);
        let z = StdT::new(10.0).unwrap().quantile(0.01).unwrap();
        for (h, q) in h.iter().zip(var) {
            approx::assert_relative_eq!(*q, h.sqrt() * z, max_relative = 1e-12);
        }
        assert_eq!(v, simulated_band(n, 10.0, 0.01, 7).unwrap());
    }

    #[test]
    fn landscapes_bottom_out_near_the_truth() {
        let (nu, alpha) = (10.0, 0.05);
        let t = StdT::new(nu).unwrap();
        let truth = t.quantile(alpha).unwrap();
        let lo = quantile_landscape(nu, alpha, 50_000, 1, -3.0, -1.0, 201).unwrap();
        let i = lo.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((-3.0 + 0.01 * i as f64 - truth).abs() < 0.05);

        let j = joint_landscape(nu, alpha, 20_000, 1, (-3.0, -1.0, 21), (-4.0, -1.0, 31)).unwrap();
        assert_eq!(j.len(), 21 * 31);
        assert!(j[0].is_finite() && j[30].is_nan() && j[j.len() - 1].is_finite());
    }
}
