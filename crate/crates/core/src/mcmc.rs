//! Adaptive block Metropolis estimation for the realized models.
//!
//! Estimation runs in two stages. The burn-in stage is a block random-walk
//! Metropolis sampler whose proposal is a three-component Gaussian mixture
//! with covariances `C_i * s^2 * Sigma`. The scale `s` of each block is tuned
//! toward a dimension-dependent acceptance rate, and `Sigma` is re-estimated
//! from the draws of the previous epoch. Epochs repeat until the per-parameter
//! posterior standard deviations stabilise. The second stage is an independent
//! Metropolis-Hastings sampler whose mixture proposal is centred at the
//! last-epoch sample mean with the last-epoch sample covariance.

use std::io::Write;
use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{return_part, JointSeries, ModelKind, PathCache, Theta, NU_MAX, N_PARAMS};
use crate::optim::NelderMead;

/// Covariance multipliers of the three mixture components.
pub const MIXTURE_SCALES: [f64; 3] = [1.0, 100.0, 0.01];

const COV_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct McmcConfig {
    pub epoch_len: usize,
    pub imh_len: usize,
    /// Leading draws dropped from each epoch and from the IMH chain.
    pub discard: usize,
    pub max_epochs: usize,
    /// Mean absolute relative change in standard deviations that ends burn-in.
    pub sd_change_tol: f64,
    /// Iterations between scale updates.
    pub adapt_every: usize,
    pub scale_bounds: (f64, f64),
    pub mixture_weights: [f64; 3],
    /// Climb to the nearest posterior mode before the first epoch.
    pub warm_start: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            epoch_len: 20_000,
            imh_len: 10_000,
            discard: 2_000,
            max_epochs: 6,
            sd_change_tol: 0.10,
            adapt_every: 100,
            scale_bounds: (1e-4, 1e4),
            mixture_weights: [1.0 / 3.0; 3],
            warm_start: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_len == 0 || self.imh_len == 0 || self.max_epochs == 0 || self.adapt_every == 0 {
            return Err(Error::Config("MCMC sizes must be positive".into()));
        }
        if self.discard + 2 > self.epoch_len || self.discard >= self.imh_len {
            return Err(Error::Config(format!(
                "discard ({}) must leave at least two draws per epoch ({}) and one IMH draw ({})",
                self.discard, self.epoch_len, self.imh_len
            )));
        }
        let w = self.mixture_weights;
        if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("mixture weights must be non-negative and sum to 1".into()));
        }
        Ok(())
    }
}

/// Target acceptance rate for a block of dimension `d`.
pub fn target_acceptance(d: usize) -> f64 {
    match d {
        1 => 0.44,
        2..=4 => 0.35,
        _ => 0.234,
    }
}

/// Partition of the nine parameter indices into update blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockScheme {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockScheme {
    pub fn for_kind(kind: ModelKind) -> Self {
        let blocks = match kind {
            // (omega, beta, gamma, phi1, phi2), (xi1, xi2, sigma), (nu)
            ModelKind::Rtmg => vec![vec![0, 1, 2, 4, 6], vec![3, 5, 7], vec![8]],
            // (omega, beta, gamma, phi), (xi, tau1, tau2, sigma), (nu)
            ModelKind::Rg => vec![vec![0, 1, 2, 4], vec![3, 5, 6, 7], vec![8]],
        };
        Self { blocks }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| target_acceptance(b.len())).collect()
    }

    pub fn is_partition(&self) -> bool {
        let mut seen = [false; N_PARAMS];
        for &i in self.blocks.iter().flatten() {
            if i >= N_PARAMS || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.iter().all(|&s| s)
    }
}

/// Gaussian covariance with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl BlockCovariance {
    pub fn new(mut cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        let mut chol = cov.clone().cholesky();
        if chol.is_none() {
            cov += DMatrix::identity(d, d) * COV_JITTER;
            chol = cov.clone().cholesky();
        }
        let chol = chol.ok_or_else(|| Error::Estimation("proposal covariance is not positive definite".into()))?.l();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { cov, chol, log_det })
    }

    pub fn scaled_identity(d: usize, v: f64) -> Self {
        Self::new(DMatrix::identity(d, d) * v).expect("positive diagonal")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// `L * zeta` for a standard normal vector `zeta`.
    fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let zeta = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.chol * zeta
    }

    /// Log density of `N(0, c * cov)` at `x`.
    fn ln_density(&self, x: &DVector<f64>, c: f64) -> f64 {
        let d = self.dim() as f64;
        let y = self.chol.solve_lower_triangular(x).expect("Cholesky factor is non-singular");
        let quad = y.norm_squared() / c;
        -0.5 * (d * (std::f64::consts::TAU.ln() + c.ln()) + self.log_det + quad)
    }
}

/// Per-block three-component Gaussian mixture proposal.
#[derive(Debug, Clone)]
pub struct MixtureProposal {
    pub scheme: BlockScheme,
    pub covariances: Vec<BlockCovariance>,
    /// Standard-deviation multiplier tuned during burn-in.
    pub scales: Vec<f64>,
    /// `None` for a random-walk mean; fixed centre for the independence sampler.
    pub means: Option<Vec<DVector<f64>>>,
    pub weights: [f64; 3],
}

impl MixtureProposal {
    /// Initial random-walk proposal: `Sigma_1 = (2.38 / sqrt(d)) I` per block.
    pub fn initial(scheme: BlockScheme, weights: [f64; 3]) -> Self {
        let covariances = scheme
            .blocks
            .iter()
            .map(|b| BlockCovariance::scaled_identity(b.len(), 2.38 / (b.len() as f64).sqrt()))
            .collect();
        let scales = vec![1.0; scheme.blocks.len()];
        Self { scheme, covariances, scales, means: None, weights }
    }

    fn pick_component<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        2
    }

    /// Mixture log density of the independence proposal for `block` at `x`.
    fn ln_independent_density(&self, block: usize, x: &DVector<f64>) -> f64 {
        let mean = &self.means.as_ref().expect("independence proposal has a mean")[block];
        let dx = x - mean;
        let cov = &self.covariances[block];
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(MIXTURE_SCALES)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| w.ln() + cov.ln_density(&dx, c))
            .collect();
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Metropolis-Hastings acceptance decision.
///
/// `log_q_ratio` is `ln q(current) - ln q(proposal)`; zero for symmetric
/// random-walk proposals.
pub fn mh_accept(log_post_current: f64, log_post_proposal: f64, log_q_ratio: f64, uniform: f64) -> bool {
    if log_post_proposal == f64::NEG_INFINITY || log_post_proposal.is_nan() {
        return false;
    }
    let log_ratio = log_post_proposal - log_post_current + log_q_ratio;
    uniform.ln() < log_ratio
}

/// Current point of a chain with its cached likelihood pieces.
#[derive(Debug, Clone)]
struct ChainState {
    theta: Theta,
    path: PathCache,
    ret: f64,
    meas: f64,
}

impl ChainState {
    fn new(kind: ModelKind, theta: Theta, series: &JointSeries) -> Result<Self> {
        if !kind.check_stationarity(&theta) {
            return Err(Error::Config(format!("initial parameters {theta:?} violate the constraint region")));
        }
        let path = PathCache::build(theta[0], theta[1], theta[2], series);
        let ret = return_part(&path, theta[8]);
        let meas = kind.measurement_part(&theta, &path, series);
        if !(ret + meas).is_finite() {
            return Err(Error::Config("initial parameters give a non-finite likelihood".into()));
        }
        Ok(Self { theta, path, ret, meas })
    }

    fn log_post(&self) -> f64 {
        self.ret + self.meas
    }
}

/// Reusable workspace for evaluating one block proposal.
struct Evaluator<'a> {
    kind: ModelKind,
    series: &'a JointSeries,
    scratch: PathCache,
}

impl<'a> Evaluator<'a> {
    fn new(kind: ModelKind, series: &'a JointSeries, state: &ChainState) -> Self {
        Self { kind, series, scratch: state.path.clone() }
    }

    /// Attempts to move `state` to `proposal` (which differs only on `block`).
    fn try_move(
        &mut self,
        state: &mut ChainState,
        block: &[usize],
        proposal: Theta,
        log_q_ratio: f64,
        uniform: f64,
    ) -> bool {
        if !self.kind.check_stationarity(&proposal) {
            return false;
        }
        let moves_path = block.iter().any(|&i| i <= 2);
        let moves_ret = moves_path || block.contains(&8);
        let moves_meas = moves_path || block.iter().any(|&i| (3..=7).contains(&i));

        if moves_path {
            self.scratch.refill(proposal[0], proposal[1], proposal[2], self.series);
        }
        let path = if moves_path { &self.scratch } else { &state.path };
        let ret = if moves_ret { return_part(path, proposal[8]) } else { state.ret };
        let meas = if moves_meas { self.kind.measurement_part(&proposal, path, self.series) } else { state.meas };
        let lp = ret + meas;
        let lp = if lp.is_finite() { lp } else { f64::NEG_INFINITY };
        if mh_accept(state.log_post(), lp, log_q_ratio, uniform) {
            state.theta = proposal;
            state.ret = ret;
            state.meas = meas;
            if moves_path {
                std::mem::swap(&mut state.path, &mut self.scratch);
            }
            true
        } else {
            false
        }
    }
}

/// Summary of one burn-in epoch.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub means: Theta,
    pub sds: Theta,
    pub acceptance: Vec<f64>,
    pub scales: Vec<f64>,
    /// Mean absolute relative change of `sds` against the previous epoch.
    pub sd_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BurnIn {
    pub kind: ModelKind,
    /// Independence proposal built from the last epoch.
    pub tuned: MixtureProposal,
    /// Retained (post-discard) draws of the last epoch.
    pub last_epoch: Vec<Theta>,
    pub epochs: Vec<EpochRecord>,
    pub converged: bool,
    /// Chain position at the end of burn-in.
    pub end_state: Theta,
}

impl BurnIn {
    /// Acceptance rates of the final epoch, per block.
    pub fn final_acceptance(&self) -> &[f64] {
        &self.epochs.last().expect("at least one epoch").acceptance
    }
}

/// Default starting point: every parameter at 0.25 except `nu = 8`, then
/// projected into the constraint region.
pub fn default_init(kind: ModelKind) -> Theta {
    let mut theta = [0.25; N_PARAMS];
    theta[8] = 8.0;
    project_into_region(kind, theta)
}

/// Moves out-of-region coordinates to the nearest interior point with a 0.01 margin.
pub fn project_into_region(kind: ModelKind, mut theta: Theta) -> Theta {
    const MARGIN: f64 = 0.01;
    if !(theta[8] > 4.0) {
        theta[8] = 4.0 + MARGIN;
    } else if theta[8] > NU_MAX {
        theta[8] = NU_MAX - MARGIN;
    }
    if !(theta[7] > 0.0) {
        theta[7] = MARGIN;
    }
    let phis: &[usize] = match kind {
        ModelKind::Rtmg => &[4, 6],
        ModelKind::Rg => &[4],
    };
    for &i in phis {
        let p = theta[1] + theta[2] * theta[i];
        if p >= 1.0 - MARGIN {
            // shrink beta so that the worst regime sits at 1 - margin
            theta[1] -= p - (1.0 - MARGIN);
        }
    }
    theta
}

/// Nelder-Mead ascent of the log posterior from `theta`.
///
/// Starting the chain at a mode keeps the first epoch's large early proposals
/// from stranding it in a low-likelihood basin (for instance `gamma < 0` with
/// a large negative `phi`), from which the random walk rarely escapes.
pub fn posterior_mode(kind: ModelKind, series: &JointSeries, theta: Theta) -> Theta {
    let nm = NelderMead { max_evals: 20_000, x_tol: 1e-6, f_tol: 1e-10 };
    let objective = |x: &[f64]| {
        let t: Theta = x.try_into().expect("nine parameters");
        -kind.loglik(&t, series)
    };
    let first = nm.minimize(objective, &theta, &[0.1; N_PARAMS]);
    let second = nm.minimize(objective, &first.x, &[0.05; N_PARAMS]);
    let best = if second.f <= first.f { second } else { first };
    let mode: Theta = best.x.as_slice().try_into().expect("nine parameters");
    if best.f.is_finite() && best.f <= -kind.loglik(&theta, series) {
        mode
    } else {
        theta
    }
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Adaptive random-walk burn-in.
pub fn run_burn_in(
    kind: ModelKind,
    series: &JointSeries,
    init: Option<Theta>,
    config: &McmcConfig,
    seed: u64,
) -> Result<BurnIn> {
    config.validate()?;
    let init = match init {
        Some(t) => project_into_region(kind, t),
        None => default_init(kind),
    };
    let init = if config.warm_start { posterior_mode(kind, series, init) } else { init };
    let mut rng = chain_rng(seed, 0);
    let mut state = ChainState::new(kind, init, series)?;
    let mut eval = Evaluator::new(kind, series, &state);

    let scheme = BlockScheme::for_kind(kind);
    let targets = scheme.targets();
    let mut proposal = MixtureProposal::initial(scheme.clone(), config.mixture_weights);
    let n_blocks = scheme.blocks.len();

    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut draws: Vec<Theta> = Vec::with_capacity(config.epoch_len);
    let mut converged = false;

    for epoch in 0..config.max_epochs {
        if epoch > 0 {
            proposal.covariances = block_covariances(&scheme, &draws[config.discard..], &proposal.covariances)?;
            proposal.scales = scheme.dims().iter().map(|&d| 2.38 / (d as f64).sqrt()).collect();
        }
        draws.clear();
        let mut accepted = vec![0usize; n_blocks];
        let mut batch_accepted = vec![0usize; n_blocks];

        for it in 0..config.epoch_len {
            for (b, block) in scheme.blocks.iter().enumerate() {
                let comp = proposal.pick_component(&mut rng);
                let step = proposal.covariances[b].draw(&mut rng) * (MIXTURE_SCALES[comp].sqrt() * proposal.scales[b]);
                let mut cand = state.theta;
                for (k, &i) in block.iter().enumerate() {
                    cand[i] += step[k];
                }
                let u: f64 = rng.random();
                if eval.try_move(&mut state, block, cand, 0.0, u) {
                    accepted[b] += 1;
                    batch_accepted[b] += 1;
                }
            }
            draws.push(state.theta);

            if (it + 1) % config.adapt_every == 0 {
                for b in 0..n_blocks {
                    let rate = batch_accepted[b] as f64 / config.adapt_every as f64;
                    proposal.scales[b] = (proposal.scales[b] * (rate - targets[b]).exp())
                        .clamp(config.scale_bounds.0, config.scale_bounds.1);
                    batch_accepted[b] = 0;
                }
            }
        }

        let kept = &draws[config.discard..];
        let (means, sds) = column_moments(kept);
        let sd_change = epochs.last().map(|prev| mean_abs_pct_change(&prev.sds, &sds));
        let record = EpochRecord {
            epoch: epoch + 1,
            means,
            sds,
            acceptance: accepted.iter().map(|&a| a as f64 / config.epoch_len as f64).collect(),
            scales: proposal.scales.clone(),
            sd_change,
        };
        debug!(
            "{kind} burn-in epoch {}: acceptance {:?}, sd change {:?}",
            record.epoch, record.acceptance, record.sd_change
        );
        epochs.push(record);
        if matches!(sd_change, Some(c) if c < config.sd_change_tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("{kind} burn-in did not stabilise within {} epochs; continuing with the last epoch", config.max_epochs);
    }

    let kept = draws[config.discard..].to_vec();
    let covariances = block_covariances(&scheme, &kept, &proposal.covariances)?;
    let (means, _) = column_moments(&kept);
    let block_means =
        scheme.blocks.iter().map(|b| DVector::from_iterator(b.len(), b.iter().map(|&i| means[i]))).collect();
    let tuned = MixtureProposal {
        scheme,
        covariances,
        scales: vec![1.0; n_blocks],
        means: Some(block_means),
        weights: config.mixture_weights,
    };

    Ok(BurnIn { kind, tuned, last_epoch: kept, epochs, converged, end_state: state.theta })
}

/// Retained MCMC output of the independence stage.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub kind: ModelKind,
    pub draws: Vec<Theta>,
    /// Leading draws to drop in posterior summaries.
    pub discard: usize,
    pub scheme: BlockScheme,
    pub imh_acceptance: Vec<f64>,
    pub burn_in_acceptance: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub converged: bool,
}

impl PosteriorSample {
    pub fn retained(&self) -> &[Theta] {
        &self.draws[self.discard.min(self.draws.len())..]
    }

    pub fn posterior_mean(&self) -> Result<Theta> {
        posterior_mean(&self.draws, self.discard)
    }

    pub fn write_draws_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["iteration".to_string()];
        header.extend(self.kind.param_names().iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(d.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Per-block acceptance rates of the last burn-in epoch and the IMH stage.
    pub fn write_acceptance_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["block", "parameters", "dimension", "target", "burn_in_rate", "imh_rate"])?;
        let names = self.kind.param_names();
        for (b, block) in self.scheme.blocks.iter().enumerate() {
            let params: Vec<&str> = block.iter().map(|&i| names[i]).collect();
            w.write_record([
                (b + 1).to_string(),
                params.join(" "),
                block.len().to_string(),
                target_acceptance(block.len()).to_string(),
                self.burn_in_acceptance[b].to_string(),
                self.imh_acceptance[b].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Per-epoch parameter standard deviations.
    pub fn write_epochs_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let names = self.kind.param_names();
        let mut out = String::from("epoch");
        for n in names {
            out.push_str(&format!(",sd_{n}"));
        }
        out.push_str(",sd_change\n");
        for e in &self.epochs {
            out.push_str(&e.epoch.to_string());
            for s in e.sds {
                out.push_str(&format!(",{s}"));
            }
            match e.sd_change {
                Some(c) => out.push_str(&format!(",{c}\n")),
                None => out.push_str(",\n"),
            }
        }
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Posterior-mean VaR and ES forecasts for the day after `series` ends.
///
/// Each retained draw yields `h_{n+1}` from its own filtered path and its own
/// `nu`; the forecasts are averaged over draws. Returns `(var, es)` per alpha.
pub fn predictive_var_es(draws: &[Theta], series: &JointSeries, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    if draws.is_empty() {
        return Err(Error::Estimation("no retained draws to forecast from".into()));
    }
    let mut sums = vec![(0.0, 0.0); alphas.len()];
    let mut last_garch: Option<([f64; 3], f64)> = None;
    let mut last_nu: Option<(f64, Vec<(f64, f64)>)> = None;
    let log_x = series.log_realized();
    for d in draws {
        let garch = [d[0], d[1], d[2]];
        let log_h_next = match last_garch {
            Some((g, v)) if g == garch => v,
            _ => {
                let mut lh = series.initial_log_h();
                for lx in log_x {
                    lh = d[0] + d[1] * lh + d[2] * lx;
                }
                last_garch = Some((garch, lh));
                lh
            }
        };
        let factors = match &last_nu {
            Some((nu, f)) if *nu == d[8] => f.clone(),
            _ => {
                let f = alphas.iter().map(|&a| crate::dist::var_es(1.0, d[8], a)).collect::<Result<Vec<_>>>()?;
                last_nu = Some((d[8], f.clone()));
                f
            }
        };
        let sd = (0.5 * log_h_next).exp();
        for (acc, (v, e)) in sums.iter_mut().zip(factors) {
            acc.0 += sd * v;
            acc.1 += sd * e;
        }
    }
    let n = draws.len() as f64;
    Ok(sums.into_iter().map(|(v, e)| (v / n, e / n)).collect())
}

/// Independent Metropolis-Hastings stage.
pub fn run_imh(series: &JointSeries, burn: &BurnIn, config: &McmcConfig, seed: u64) -> Result<PosteriorSample> {
    config.validate()?;
    let kind = burn.kind;
    let proposal = &burn.tuned;
    let scheme = &proposal.scheme;
    let means = proposal.means.as_ref().ok_or_else(|| Error::Config("IMH needs a fixed-mean proposal".into()))?;

    let mut rng = chain_rng(seed, 1);
    let mut state = ChainState::new(kind, burn.end_state, series)?;
    let mut eval = Evaluator::new(kind, series, &state);
    let mut accepted = vec![0usize; scheme.blocks.len()];
    let mut draws = Vec::with_capacity(config.imh_len);

    for _ in 0..config.imh_len {
        for (b, block) in scheme.blocks.iter().enumerate() {
            let comp = proposal.pick_component(&mut rng);
            let x = &means[b] + proposal.covariances[b].draw(&mut rng) * MIXTURE_SCALES[comp].sqrt();
            let mut cand = state.theta;
            for (k, &i) in block.iter().enumerate() {
                cand[i] = x[k];
            }
            let current = DVector::from_iterator(block.len(), block.iter().map(|&i| state.theta[i]));
            let log_q_ratio = proposal.ln_independent_density(b, &current) - proposal.ln_independent_density(b, &x);
            let u: f64 = rng.random();
            if eval.try_move(&mut state, block, cand, log_q_ratio, u) {
                accepted[b] += 1;
            }
        }
        draws.push(state.theta);
    }

    Ok(PosteriorSample {
        kind,
        draws,
        discard: config.discard,
        scheme: scheme.clone(),
        imh_acceptance: accepted.iter().map(|&a| a as f64 / config.imh_len as f64).collect(),
        burn_in_acceptance: burn.final_acceptance().to_vec(),
        epochs: burn.epochs.clone(),
        converged: burn.converged,
    })
}

/// Burn-in followed by the independence stage, both seeded from `seed`.
pub fn estimate(
    kind: ModelKind,
    series: &JointSeries,
    init: Option<Theta>,
    config: &McmcConfig,
    seed: u64,
) -> Result<PosteriorSample> {
    let burn = run_burn_in(kind, series, init, config, seed)?;
    run_imh(series, &burn, config, seed)
}

/// Column means of `draws[discard..]`.
pub fn posterior_mean(draws: &[Theta], discard: usize) -> Result<Theta> {
    if discard >= draws.len() {
        return Err(Error::Estimation(format!("cannot discard {discard} of {} draws", draws.len())));
    }
    Ok(column_moments(&draws[discard..]).0)
}

fn column_moments(draws: &[Theta]) -> (Theta, Theta) {
    let n = draws.len() as f64;
    let mut mean = [0.0; N_PARAMS];
    for d in draws {
        for i in 0..N_PARAMS {
            mean[i] += d[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut sd = [0.0; N_PARAMS];
    if draws.len() > 1 {
        for d in draws {
            for i in 0..N_PARAMS {
                let e = d[i] - mean[i];
                sd[i] += e * e;
            }
        }
        for s in &mut sd {
            *s = (*s / (n - 1.0)).sqrt();
        }
    }
    (mean, sd)
}

fn mean_abs_pct_change(prev: &Theta, cur: &Theta) -> f64 {
    let terms: Vec<f64> = prev.iter().zip(cur).filter(|(p, _)| **p > 0.0).map(|(p, c)| ((c - p) / p).abs()).collect();
    if terms.is_empty() {
        f64::INFINITY
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    }
}

fn block_covariances(
    scheme: &BlockScheme,
    draws: &[Theta],
    fallback: &[BlockCovariance],
) -> Result<Vec<BlockCovariance>> {
    let n = draws.len() as f64;
    let (means, _) = column_moments(draws);
    scheme
        .blocks
        .iter()
        .enumerate()
        .map(|(b, block)| {
            let d = block.len();
            let mut cov = DMatrix::zeros(d, d);
            for row in draws {
                for (a, &i) in block.iter().enumerate() {
                    let ei = row[i] - means[i];
                    for (c, &j) in block.iter().enumerate().skip(a) {
                        cov[(a, c)] += ei * (row[j] - means[j]);
                    }
                }
            }
            for a in 0..d {
                for c in a..d {
                    let v = cov[(a, c)] / (n - 1.0);
                    cov[(a, c)] = v;
                    cov[(c, a)] = v;
                }
            }
            // a block that never moved has no usable covariance
            if cov.diagonal().iter().any(|v| !(*v > 0.0)) {
                warn!("block {} did not move during the epoch; keeping its previous covariance", b + 1);
                return Ok(fallback[b].clone());
            }
            BlockCovariance::new(cov).or_else(|_| Ok(fallback[b].clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn block_targets_by_dimension() {
        let s = BlockScheme::for_kind(ModelKind::Rtmg);
        assert_eq!(s.dims(), vec![5, 3, 1]);
        assert_eq!(s.targets(), vec![0.234, 0.35, 0.44]);
        assert!(s.is_partition());
        let g = BlockScheme::for_kind(ModelKind::Rg);
        assert_eq!(g.dims(), vec![4, 4, 1]);
        assert_eq!(g.targets(), vec![0.35, 0.35, 0.44]);
        assert!(g.is_partition());
    }

    #[test]
    fn initial_proposal_covariance() {
        let p = MixtureProposal::initial(BlockScheme::for_kind(ModelKind::Rtmg), [1.0 / 3.0; 3]);
        for (cov, d) in p.covariances.iter().zip([5usize, 3, 1]) {
            let expected = 2.38 / (d as f64).sqrt();
            assert_eq!(cov.matrix(), &(DMatrix::identity(d, d) * expected));
        }
    }

    #[test]
    fn accept_rules() {
        assert!(!mh_accept(-10.0, f64::NEG_INFINITY, 0.0, 1e-300));
        assert!(mh_accept(-10.0, -10.0, 0.0, 0.999_999));
        let half = 0.5f64.ln();
        assert!(mh_accept(0.0, half, 0.0, 0.4));
        assert!(!mh_accept(0.0, half, 0.0, 0.6));
        // the proposal-density correction enters the same ratio
        assert!(mh_accept(0.0, 0.0, half, 0.4));
        assert!(!mh_accept(0.0, 0.0, half, 0.6));
    }

    #[test]
    fn posterior_mean_cases() {
        let c = [1.5; N_PARAMS];
        assert_eq!(posterior_mean(&[c, c, c], 1).unwrap(), c);
        let a = [1.0; N_PARAMS];
        let b = [2.0; N_PARAMS];
        assert_eq!(posterior_mean(&[a, b], 0).unwrap(), [1.5; N_PARAMS]);
        assert!(posterior_mean(&[a, b], 2).is_err());
    }

    #[test]
    fn init_projection() {
        let t = default_init(ModelKind::Rtmg);
        assert_eq!(t[8], 8.0);
        assert!(t[..8].iter().all(|&v| v == 0.25));
        let bad = project_into_region(ModelKind::Rtmg, [0.0, 0.9, 0.5, 0.0, 1.0, 0.0, 0.5, -1.0, 3.0]);
        assert!(ModelKind::Rtmg.check_stationarity(&bad));
        assert_relative_eq!(bad[1] + bad[2] * bad[4], 0.99, epsilon = 1e-12);
    }

    #[test]
    fn mixture_density_matches_single_gaussian_when_weights_degenerate() {
        let cov = BlockCovariance::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.2]);
        // direct formula
        let det: f64 = 2.0 * 1.0 - 0.09;
        let inv = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 2.0]) / det;
        let quad = (x.transpose() * inv * &x)[(0, 0)];
        let expected = -0.5 * (2.0 * std::f64::consts::TAU.ln() + det.ln() + quad);
        assert_relative_eq!(cov.ln_density(&x, 1.0), expected, max_relative = 1e-12);
        let scaled = -0.5 * (2.0 * (std::f64::consts::TAU * 100.0).ln() + det.ln() + quad / 100.0);
        assert_relative_eq!(cov.ln_density(&x, 100.0), scaled, max_relative = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        let bad = McmcConfig { discard: 20_000, ..McmcConfig::default() };
        assert!(bad.validate().is_err());
        let w = McmcConfig { mixture_weights: [0.5, 0.5, 0.5], ..McmcConfig::default() };
        assert!(w.validate().is_err());
    }
}
