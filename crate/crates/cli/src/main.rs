use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use rtmg_core::benchmark::{fit_egarch_t, fit_gjr_t, BenchmarkKind};
use rtmg_core::data_io::{load_joint_csv, read_daily_csv, validate, write_series_csv};
use rtmg_core::mcmc;
use rtmg_core::model::{JointSeries, ParamsRtmg};
use rtmg_core::risk::{
    alpha_tag, read_forecasts_csv, rolling_forecast, run_backtest, score_series, tournament, write_forecasts_csv,
    LossKind, LossMatrix, ModelId, RiskForecast,
};
use rtmg_core::sim::{self, replication_seed, replication_study, SimConfig};

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "rtmg",
    version,
    about = "Realized threshold-measurement GARCH: simulation, estimation, VaR/ES backtests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Default)]
struct Opts {
    /// key = value settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// rtmg | rg | egarch-t | gjr-t | egarch-t-hs | gjr-t-hs (repeatable)
    #[arg(long, global = true)]
    model: Vec<String>,
    /// Daily CSV with (date, close, rv) or (date, return, rv) columns (repeatable)
    #[arg(long, global = true)]
    data: Vec<PathBuf>,
    /// Sample size (simulate) or in-sample window (forecast, backtest)
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Number of out-of-sample forecasts
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Re-estimate every this many forecasts
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Tail level (repeatable)
    #[arg(long, global = true)]
    alpha: Vec<f64>,
    /// Base seed; every estimation derives its own seed from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replications in the simulation study
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Draws per burn-in epoch
    #[arg(long, global = true)]
    epoch_len: Option<usize>,
    /// Retained independence-sampler draws
    #[arg(long, global = true)]
    imh_len: Option<usize>,
    /// Draws dropped at the start of each burn-in epoch
    #[arg(long, global = true)]
    discard: Option<usize>,
    /// Cap on burn-in epochs
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate series from the threshold model and run the replication study
    Simulate {
        /// Write the simulated series without estimating
        #[arg(long)]
        series_only: bool,
    },
    /// Estimate one model on one data file
    Estimate,
    /// Rolling one-step-ahead VaR/ES forecasts
    Forecast,
    /// Forecast with several models on several files and rank them
    Backtest,
    /// Recompute loss tables from saved forecast files
    Report {
        /// Forecast CSVs, one per data file and in the same order
        #[arg(long, required = true)]
        forecasts: Vec<PathBuf>,
    },
    /// Check a data file and print a JSON validation report
    Validate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Estimate => "estimate",
            Command::Forecast => "forecast",
            Command::Backtest => "backtest",
            Command::Report { .. } => "report",
            Command::Validate => "validate",
        }
    }
}

fn merged(opts: &Opts) -> Result<BTreeMap<String, String>> {
    let mut kv = match &opts.config {
        Some(p) => config::read_kv(p)?,
        None => BTreeMap::new(),
    };
    let join = |v: Vec<String>| v.join(",");
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.insert(k.to_string(), v);
        }
    };
    set("model", (!opts.model.is_empty()).then(|| join(opts.model.clone())));
    set("data", (!opts.data.is_empty()).then(|| join(opts.data.iter().map(|p| p.display().to_string()).collect())));
    set("alpha", (!opts.alpha.is_empty()).then(|| join(opts.alpha.iter().map(|a| a.to_string()).collect())));
    set("n", opts.n.map(|v| v.to_string()));
    set("m", opts.m.map(|v| v.to_string()));
    set("stride", opts.stride.map(|v| v.to_string()));
    set("seed", opts.seed.map(|v| v.to_string()));
    set("out", opts.out.as_ref().map(|p| p.display().to_string()));
    set("replications", opts.replications.map(|v| v.to_string()));
    set("epoch_len", opts.epoch_len.map(|v| v.to_string()));
    set("imh_len", opts.imh_len.map(|v| v.to_string()));
    set("discard", opts.discard.map(|v| v.to_string()));
    set("max_epochs", opts.max_epochs.map(|v| v.to_string()));
    Ok(kv)
}

/// Collects written files for the metadata sidecar.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }
}

fn series_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned())
}

fn load(path: &Path) -> Result<JointSeries> {
    load_joint_csv(path).with_context(|| format!("loading {}", path.display()))
}

fn one_data(cfg: &RunConfig) -> Result<&Path> {
    match cfg.data.as_slice() {
        [p] => Ok(p),
        [] => bail!("--data is required"),
        _ => bail!("this command takes exactly one --data file"),
    }
}

fn cmd_simulate(cfg: &RunConfig, out: &mut Outputs, series_only: bool) -> Result<()> {
    let sim_cfg = SimConfig {
        n: cfg.n.unwrap_or(1900),
        replications: cfg.replications,
        seed: cfg.seed,
        mcmc: cfg.mcmc.clone(),
        ..SimConfig::default()
    };
    sim_cfg.validate()?;
    std::fs::create_dir_all(out.dir.join("series"))?;
    for i in 0..sim_cfg.replications {
        let s =
            sim::simulate_rtmg(&sim_cfg.params, sim_cfg.n, sim_cfg.burn_in_discard, replication_seed(sim_cfg.seed, i))?;
        write_series_csv(&out.path(&format!("series/sim_{:04}.csv", i + 1)), &s.series)?;
    }
    info!("wrote {} simulated series", sim_cfg.replications);
    if series_only {
        return Ok(());
    }
    info!("estimating {} replications of n = {}", sim_cfg.replications, sim_cfg.n);
    let (summary, results) = replication_study(&sim_cfg)?;
    summary.write_csv(&out.path("summary.csv"))?;
    summary.write_text(&out.path("summary.txt"))?;
    let path = out.path("replications.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["replication".to_string()];
    header.extend(ParamsRtmg::NAMES.iter().map(|s| s.to_string()));
    for a in sim::STUDY_ALPHAS {
        let tag = alpha_tag(a);
        header.extend([format!("var_{tag}"), format!("es_{tag}"), format!("true_var_{tag}"), format!("true_es_{tag}")]);
    }
    w.write_record(&header)?;
    for r in &results {
        let mut row = vec![(r.index + 1).to_string()];
        row.extend(r.estimate.iter().map(|v| v.to_string()));
        for (f, t) in r.forecasts.iter().zip(&r.truth) {
            row.extend([f.0, f.1, t.0, t.1].iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!("{}", summary.to_text());
    Ok(())
}

fn cmd_estimate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let path = one_data(cfg)?;
    let model = match cfg.models.as_slice() {
        [m] => *m,
        [] => ModelId::Rtmg,
        _ => bail!("estimate takes a single --model"),
    };
    let series = load(path)?;
    if let Some(kind) = model.realized() {
        info!("estimating {model} on {} observations", series.len());
        let post = mcmc::estimate(kind, &series, None, &cfg.mcmc, cfg.seed)?;
        post.write_draws_csv(&out.path("draws.csv"))?;
        post.write_acceptance_csv(&out.path("acceptance.csv"))?;
        post.write_epochs_csv(&out.path("epochs.csv"))?;
        let mean = post.posterior_mean()?;
        let mut text = String::from("parameter,mean\n");
        for (name, v) in kind.param_names().iter().zip(mean) {
            text += &format!("{name},{v}\n");
        }
        out.write("posterior_mean.csv", &text)?;
        if !post.converged {
            log::warn!("burn-in stopped at the epoch cap before the standard deviations settled");
        }
        return Ok(());
    }
    let (kind, _) = model.benchmark().expect("benchmark model");
    let r = series.returns();
    let value = match kind {
        BenchmarkKind::Gjr => {
            let f = fit_gjr_t(r, None)?;
            json!({ "model": model.id(), "params": f.params, "loglik": f.loglik, "h_next": f.h_next })
        }
        BenchmarkKind::Egarch => {
            let f = fit_egarch_t(r, None)?;
            json!({ "model": model.id(), "params": f.params, "loglik": f.loglik, "h_next": f.h_next })
        }
    };
    out.write("fit.json", &serde_json::to_string_pretty(&value)?)
}

fn cmd_forecast(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let path = one_data(cfg)?;
    let series = load(path)?;
    let models = if cfg.models.is_empty() { vec![ModelId::Rtmg] } else { cfg.models.clone() };
    let fc = cfg.forecast();
    let mut all: Vec<RiskForecast> = Vec::new();
    let mut gaps = 0;
    for m in models {
        info!("{m}: {} forecasts, re-estimating every {}", fc.m, fc.stride);
        let run = rolling_forecast(m, &series, &fc)?;
        gaps += run.gaps.len();
        all.extend(run.forecasts);
    }
    write_forecasts_csv(&out.path("forecasts.csv"), &all)?;
    if gaps > 0 {
        log::warn!("{gaps} forecast origins have no forecast");
    }
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    if cfg.data.is_empty() {
        bail!("--data is required (repeat it for several series)");
    }
    let series: Vec<(String, JointSeries)> =
        cfg.data.iter().map(|p| Ok((series_name(p), load(p)?))).collect::<Result<_>>()?;
    let models = if cfg.models.is_empty() { ModelId::ALL.to_vec() } else { cfg.models.clone() };
    info!("backtesting {} models on {} series", models.len(), series.len());
    let bt = run_backtest(&models, &series, &cfg.forecast())?;
    out.files.extend(bt.write(&out.dir)?);
    if let Some(rep) = bt.reports.first() {
        eprintln!("{}", rep.report.to_text());
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig, out: &mut Outputs, forecasts: &[PathBuf]) -> Result<()> {
    if forecasts.len() != cfg.data.len() {
        bail!("{} forecast files but {} data files; pass one of each per series", forecasts.len(), cfg.data.len());
    }
    let mut per_series = Vec::new();
    let mut models: Vec<ModelId> = Vec::new();
    for (f, d) in forecasts.iter().zip(&cfg.data) {
        let fc = read_forecasts_csv(f).with_context(|| format!("reading {}", f.display()))?;
        for x in &fc {
            if !models.contains(&x.model) {
                models.push(x.model);
            }
        }
        per_series.push((series_name(d), load(d)?, fc));
    }
    models.sort();
    if models.len() < 2 {
        bail!("the forecast files hold fewer than two models");
    }
    let mut text = String::new();
    for loss in [LossKind::Quantile, LossKind::Joint] {
        for &alpha in &cfg.alphas {
            let mut losses = vec![vec![None; per_series.len()]; models.len()];
            for (j, (_, s, fc)) in per_series.iter().enumerate() {
                let sets: Vec<Vec<RiskForecast>> =
                    models.iter().map(|m| fc.iter().filter(|x| x.model == *m).cloned().collect()).collect();
                let refs: Vec<&[RiskForecast]> = sets.iter().map(Vec::as_slice).collect();
                for (i, l) in score_series(&refs, s, alpha, loss)?.into_iter().enumerate() {
                    losses[i][j] = Some(l);
                }
            }
            let table = LossMatrix {
                models: models.iter().map(|m| m.label().to_string()).collect(),
                series: per_series.iter().map(|(n, _, _)| n.clone()).collect(),
                losses,
            };
            let rep = tournament(&format!("{}, alpha = {}%", loss.label(), alpha * 100.0), &table)?;
            let stem = match loss {
                LossKind::Quantile => "quantile_loss",
                LossKind::Joint => "joint_loss",
            };
            rep.write_csv(&out.path(&format!("{stem}_{}.csv", alpha_tag(alpha))))?;
            text += &rep.to_text();
            text.push('\n');
        }
    }
    eprint!("{text}");
    out.write("tables.txt", &text)
}

fn cmd_validate(cfg: &RunConfig, out: &mut Outputs) -> Result<bool> {
    let path = one_data(cfg)?;
    let table = read_daily_csv(path)?;
    let report = validate(&table);
    let text = report.to_json()?;
    println!("{text}");
    out.write("validation.json", &text)?;
    Ok(report.valid)
}

fn run(cli: Cli) -> Result<()> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs();
    let clock = Instant::now();
    let kv = merged(&cli.opts)?;
    let cfg = RunConfig::resolve(&kv)?;
    for p in &cfg.data {
        if !p.exists() {
            bail!("data file {} does not exist", p.display());
        }
    }
    let name = cli.command.name();
    let mut out = Outputs::new(&cfg.out)?;
    out.write("config.resolved", &cfg.snapshot(name))?;

    let mut ok = true;
    match &cli.command {
        Command::Simulate { series_only } => cmd_simulate(&cfg, &mut out, *series_only)?,
        Command::Estimate => cmd_estimate(&cfg, &mut out)?,
        Command::Forecast => cmd_forecast(&cfg, &mut out)?,
        Command::Backtest => cmd_backtest(&cfg, &mut out)?,
        Command::Report { forecasts } => cmd_report(&cfg, &mut out, forecasts)?,
        Command::Validate => ok = cmd_validate(&cfg, &mut out)?,
    }

    let stamp = chrono::DateTime::from_timestamp(started as i64, 0).map(|t| t.to_rfc3339()).unwrap_or_default();
    let meta = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "started": stamp,
        "elapsed_secs": clock.elapsed().as_secs_f64(),
        "outputs": out.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let meta_path = out.dir.join("run.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)
        .with_context(|| format!("writing {}", meta_path.display()))?;
    if !ok {
        bail!("validation failed");
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
