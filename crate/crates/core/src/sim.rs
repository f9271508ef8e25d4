//! Synthetic data from the threshold-measurement model and the Monte Carlo
//! replication study of the MCMC estimator.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dist::{var_es, StdNormal, StdT};
use crate::error::{Error, Result};
use crate::mcmc::{self, McmcConfig};
use crate::model::{regime, JointSeries, ModelKind, ParamsRtmg, Regime, N_PARAMS};

/// Tail levels reported by the replication study.
pub const STUDY_ALPHAS: [f64; 2] = [0.01, 0.025];

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub params: ParamsRtmg,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// DGP steps simulated and dropped before the retained sample.
    pub burn_in_discard: usize,
    pub mcmc: McmcConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: ParamsRtmg::SIMULATION,
            n: 1900,
            replications: 100,
            seed: 20_240_601,
            burn_in_discard: 1000,
            mcmc: McmcConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::Config(format!("series length must be at least 100, got {}", self.n)));
        }
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        if !self.params.check_stationarity() {
            return Err(Error::Config("simulation parameters violate the constraint region".into()));
        }
        self.mcmc.validate()
    }
}

/// A simulated sample with the latent variances that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedSeries {
    pub series: JointSeries,
    pub h: Vec<f64>,
    /// One-step-ahead variance implied by the final `(h_n, x_n)`.
    pub h_next: f64,
    /// Measurement regime used at each retained step (1 or 2).
    pub regimes: Vec<u8>,
}

fn check_dgp_params(p: &ParamsRtmg) -> Result<()> {
    let (p1, p2) = p.persistence();
    if !(p1 < 1.0 && p2 < 1.0) || !(p.nu > 4.0) || !(p.sigma_eps >= 0.0) {
        return Err(Error::Config(format!("DGP parameters are not stationary: {p:?}")));
    }
    Ok(())
}

/// Draws `n` observations after `burn_in_discard` warm-up steps.
///
/// `sigma_eps = 0` is accepted and yields a noiseless measurement equation.
pub fn simulate_rtmg(params: &ParamsRtmg, n: usize, burn_in_discard: usize, seed: u64) -> Result<SimulatedSeries> {
    check_dgp_params(params)?;
    if n < 2 {
        return Err(Error::Config("simulated series needs at least two observations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_dist = StdT::new(params.nu)?;
    let eps = StdNormal;

    let xi_bar = 0.5 * (params.xi1 + params.xi2);
    let phi_bar = 0.5 * (params.phi1 + params.phi2);
    let mut log_h = (params.omega + params.gamma * xi_bar) / (1.0 - params.beta - params.gamma * phi_bar);
    let mut log_x = xi_bar + phi_bar * log_h;
    let mut r_prev = 0.0;

    let total = burn_in_discard + n;
    let mut r = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut regimes = Vec::with_capacity(n);
    for t in 0..total {
        log_h = params.omega + params.beta * log_h + params.gamma * log_x;
        let z = z_dist.sample(&mut rng);
        let ret = (0.5 * log_h).exp() * z;
        let reg = regime(r_prev);
        let (xi, phi) = match reg {
            Regime::NonPositive => (params.xi1, params.phi1),
            Regime::Positive => (params.xi2, params.phi2),
        };
        log_x = xi + phi * log_h + params.sigma_eps * eps.sample(&mut rng);
        r_prev = ret;
        if t >= burn_in_discard {
            r.push(ret);
            x.push(log_x.exp());
            h.push(log_h.exp());
            regimes.push(reg.index());
        }
    }
    let h_next = (params.omega + params.beta * log_h + params.gamma * log_x).exp();
    let series = JointSeries::with_synthetic_dates(r, x)?;
    Ok(SimulatedSeries { series, h, h_next, regimes })
}

/// Tail functionals of the data-generating process for one forecast.
pub fn true_var_es(h_next: f64, nu: f64, alpha: f64) -> Result<(f64, f64)> {
    var_es(h_next, nu, alpha)
}

/// Estimates and forecasts from one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub estimate: [f64; N_PARAMS],
    /// `(var, es)` forecasts at each of [`STUDY_ALPHAS`].
    pub forecasts: Vec<(f64, f64)>,
    /// True `(var, es)` at each of [`STUDY_ALPHAS`].
    pub truth: Vec<(f64, f64)>,
    pub burn_in_acceptance: Vec<f64>,
    pub imh_acceptance: Vec<f64>,
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub truth: f64,
    pub mean: f64,
    pub rmse: f64,
}

/// Mean and RMSE of parameter estimates and tail forecasts across replications.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSummary {
    pub n: usize,
    pub replications: usize,
    pub failed: usize,
    pub parameters: Vec<SummaryRow>,
    pub risk: Vec<SummaryRow>,
}

/// Runs one replication: simulate, estimate, forecast.
pub fn run_replication(config: &SimConfig, index: usize) -> Result<ReplicationResult> {
    let seed = replication_seed(config.seed, index);
    let sim = simulate_rtmg(&config.params, config.n, config.burn_in_discard, seed)?;
    let sample = mcmc::estimate(ModelKind::Rtmg, &sim.series, None, &config.mcmc, seed)?;
    let estimate = sample.posterior_mean()?;
    let forecasts = mcmc::predictive_var_es(sample.retained(), &sim.series, &STUDY_ALPHAS)?;
    let truth =
        STUDY_ALPHAS.iter().map(|&a| true_var_es(sim.h_next, config.params.nu, a)).collect::<Result<Vec<_>>>()?;
    Ok(ReplicationResult {
        index,
        estimate,
        forecasts,
        truth,
        burn_in_acceptance: sample.burn_in_acceptance.clone(),
        imh_acceptance: sample.imh_acceptance.clone(),
        epochs: sample.epochs.len(),
    })
}

/// Seed for replication `index`, decorrelated from neighbouring indices.
pub fn replication_seed(base: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates and estimates every replication, then aggregates.
pub fn replication_study(config: &SimConfig) -> Result<(ReplicationSummary, Vec<ReplicationResult>)> {
    config.validate()?;
    let indices: Vec<usize> = (0..config.replications).collect();
    let run = |&i: &usize| {
        let out = run_replication(config, i);
        if let Err(e) = &out {
            warn!("replication {i} failed: {e}");
        } else {
            info!("replication {} of {} done", i + 1, config.replications);
        }
        out
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<ReplicationResult>> = {
        use rayon::prelude::*;
        indices.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<ReplicationResult>> = indices.iter().map(run).collect();

    let total = outcomes.len();
    let results: Vec<ReplicationResult> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failed = total - results.len();
    if failed as f64 >= 0.05 * total as f64 && failed > 0 {
        return Err(Error::Estimation(format!("{failed} of {total} replications failed")));
    }
    let summary = summarize(config, &results, failed)?;
    Ok((summary, results))
}

/// Aggregates replication results into mean / RMSE rows.
pub fn summarize(config: &SimConfig, results: &[ReplicationResult], failed: usize) -> Result<ReplicationSummary> {
    if results.is_empty() {
        return Err(Error::Estimation("no successful replications to summarize".into()));
    }
    let truth = config.params.to_array();
    let parameters = ParamsRtmg::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let est: Vec<f64> = results.iter().map(|r| r.estimate[i]).collect();
            let t = vec![truth[i]; est.len()];
            summary_row(name, &t, &est)
        })
        .collect();

    let mut risk = Vec::new();
    for (k, alpha) in STUDY_ALPHAS.iter().enumerate() {
        let pct = format_pct(*alpha);
        let var_t: Vec<f64> = results.iter().map(|r| r.truth[k].0).collect();
        let var_f: Vec<f64> = results.iter().map(|r| r.forecasts[k].0).collect();
        risk.push(summary_row(&format!("{pct} VaR"), &var_t, &var_f));
    }
    for (k, alpha) in STUDY_ALPHAS.iter().enumerate() {
        let pct = format_pct(*alpha);
        let es_t: Vec<f64> = results.iter().map(|r| r.truth[k].1).collect();
        let es_f: Vec<f64> = results.iter().map(|r| r.forecasts[k].1).collect();
        risk.push(summary_row(&format!("{pct} ES"), &es_t, &es_f));
    }
    Ok(ReplicationSummary { n: config.n, replications: results.len() + failed, failed, parameters, risk })
}

fn format_pct(alpha: f64) -> String {
    let s = format!("{}", alpha * 100.0);
    format!("{s}%")
}

/// Mean of the truths, mean of the estimates, and RMSE of `estimate - truth`.
pub fn summary_row(label: &str, truth: &[f64], estimate: &[f64]) -> SummaryRow {
    let n = estimate.len() as f64;
    let mean_truth = truth.iter().sum::<f64>() / n;
    let mean = estimate.iter().sum::<f64>() / n;
    let mse = truth.iter().zip(estimate).map(|(t, e)| (e - t) * (e - t)).sum::<f64>() / n;
    SummaryRow { label: label.to_string(), truth: mean_truth, mean, rmse: mse.sqrt() }
}

impl ReplicationSummary {
    pub fn rows(&self) -> impl Iterator<Item = &SummaryRow> {
        self.parameters.iter().chain(self.risk.iter())
    }

    /// Aligned text table with True / Mean / RMSE columns.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "n={:<8} {:>10} {:>10} {:>10}\n{:<10} {:>10} {:>10} {:>10}\n",
            self.n, "", "MCMC", "", "Parameter", "True", "Mean", "RMSE"
        );
        for row in self.rows() {
            out.push_str(&format!("{:<10} {:>10.4} {:>10.4} {:>10.4}\n", row.label, row.truth, row.mean, row.rmse));
        }
        out.push_str(&format!("replications: {} ({} failed)\n", self.replications, self.failed));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantity", "true", "mean", "rmse"])?;
        for row in self.rows() {
            w.write_record([row.label.clone(), row.truth.to_string(), row.mean.to_string(), row.rmse.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }
}
