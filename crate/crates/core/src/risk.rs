//! Rolling one-step-ahead VaR/ES forecasts, their losses, and model tournaments.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::benchmark::{fit_egarch_t, fit_gjr_t, hs_var_es, parametric_var_es, BenchmarkKind, ParamsEgarch, ParamsGjr};
use crate::error::{Error, Result};
use crate::mcmc::{self, McmcConfig};
use crate::model::{JointSeries, ModelKind, Theta};
use crate::sim::replication_seed;

pub const DEFAULT_ALPHAS: [f64; 2] = [0.01, 0.025];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    Egarch,
    Gjr,
    EgarchHs,
    GjrHs,
    Rg,
    Rtmg,
}

impl ModelId {
    /// Report order: benchmarks first, then the realized models.
    pub const ALL: [ModelId; 6] =
        [ModelId::Egarch, ModelId::Gjr, ModelId::EgarchHs, ModelId::GjrHs, ModelId::Rg, ModelId::Rtmg];

    pub fn id(self) -> &'static str {
        match self {
            ModelId::Egarch => "egarch-t",
            ModelId::Gjr => "gjr-t",
            ModelId::EgarchHs => "egarch-t-hs",
            ModelId::GjrHs => "gjr-t-hs",
            ModelId::Rg => "rg",
            ModelId::Rtmg => "rtmg",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelId::Egarch => "EGARCH-t",
            ModelId::Gjr => "GJR-GARCH-t",
            ModelId::EgarchHs => "EGARCH-t-HS",
            ModelId::GjrHs => "GJR-GARCH-t-HS",
            ModelId::Rg => "Realized-GARCH-tN",
            ModelId::Rtmg => "Realized-T-M-GARCH-tN",
        }
    }

    pub fn realized(self) -> Option<ModelKind> {
        match self {
            ModelId::Rg => Some(ModelKind::Rg),
            ModelId::Rtmg => Some(ModelKind::Rtmg),
            _ => None,
        }
    }

    pub fn benchmark(self) -> Option<(BenchmarkKind, bool)> {
        match self {
            ModelId::Egarch => Some((BenchmarkKind::Egarch, false)),
            ModelId::Gjr => Some((BenchmarkKind::Gjr, false)),
            ModelId::EgarchHs => Some((BenchmarkKind::Egarch, true)),
            ModelId::GjrHs => Some((BenchmarkKind::Gjr, true)),
            _ => None,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelId::ALL.into_iter().find(|m| m.id() == lower).ok_or_else(|| {
            let known: Vec<_> = ModelId::ALL.iter().map(|m| m.id()).collect();
            Error::Config(format!("unknown model '{s}' (expected one of {})", known.join(", ")))
        })
    }
}

/// One-step-ahead tail forecast for the return at index `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskForecast {
    pub t: usize,
    pub date: NaiveDate,
    pub alpha: f64,
    pub var: f64,
    pub es: f64,
    pub model: ModelId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastConfig {
    /// In-sample window length.
    pub n: usize,
    /// Number of forecast origins, taken from the end of the series.
    pub m: usize,
    /// Re-estimate every `stride` origins; in between only the filter is updated.
    pub stride: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub mcmc: McmcConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            m: 100,
            stride: 1,
            alphas: DEFAULT_ALPHAS.to_vec(),
            seed: 20240601,
            mcmc: McmcConfig::default(),
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.n < 100 || self.m == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "need n >= 100, m >= 1, stride >= 1 (got n={}, m={}, stride={})",
                self.n, self.m, self.stride
            )));
        }
        if self.n + self.m > len {
            return Err(Error::InsufficientData(format!(
                "n + m = {} exceeds the series length {len}",
                self.n + self.m
            )));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            return Err(Error::Config(format!("alphas must lie in (0, 0.5): {:?}", self.alphas)));
        }
        self.mcmc.validate()
    }

    /// Index of the first forecast target.
    pub fn first_origin(&self, len: usize) -> usize {
        len - self.m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastRun {
    pub model: ModelId,
    pub forecasts: Vec<RiskForecast>,
    pub gaps: Vec<Gap>,
    pub estimations: usize,
}

enum Fitted {
    Draws(Vec<Theta>),
    Gjr(ParamsGjr),
    Egarch(ParamsEgarch),
}

fn estimate(model: ModelId, window: &JointSeries, config: &ForecastConfig, seed: u64) -> Result<Fitted> {
    if let Some(kind) = model.realized() {
        let post = mcmc::estimate(kind, window, None, &config.mcmc, seed)?;
        return Ok(Fitted::Draws(post.retained().to_vec()));
    }
    match model.benchmark().expect("benchmark model").0 {
        BenchmarkKind::Gjr => Ok(Fitted::Gjr(fit_gjr_t(window.returns(), None)?.params)),
        BenchmarkKind::Egarch => Ok(Fitted::Egarch(fit_egarch_t(window.returns(), None)?.params)),
    }
}

fn tails(model: ModelId, fitted: &Fitted, window: &JointSeries, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let r = window.returns();
    let hs = model.benchmark().is_some_and(|(_, hs)| hs);
    let (nu, (h, h_next)) = match fitted {
        Fitted::Draws(draws) => return mcmc::predictive_var_es(draws, window, alphas),
        Fitted::Gjr(p) => (p.nu, p.filter(r)),
        Fitted::Egarch(p) => (p.nu, p.filter(r)),
    };
    alphas.iter().map(|&a| if hs { hs_var_es(r, &h, h_next, a) } else { parametric_var_es(nu, h_next, a) }).collect()
}

/// Rolling-window forecasts for the last `m` observations of `series`.
pub fn rolling_forecast(model: ModelId, series: &JointSeries, config: &ForecastConfig) -> Result<ForecastRun> {
    config.validate(series.len())?;
    let first = config.first_origin(series.len());
    let mut run = ForecastRun {
        model,
        forecasts: Vec::with_capacity(config.m * config.alphas.len()),
        gaps: Vec::new(),
        estimations: 0,
    };
    let mut fitted: Option<Fitted> = None;

    for k in 0..config.m {
        let t = first + k;
        let window = series.window(t - config.n, config.n)?;
        if k % config.stride == 0 {
            run.estimations += 1;
            let seed = replication_seed(config.seed, t);
            fitted = match estimate(model, &window, config, seed) {
                Ok(f) => Some(f),
                Err(e) => {
                    warn!("{model}: estimation failed at origin {t}: {e}");
                    None
                }
            };
        }
        let Some(f) = &fitted else {
            run.gaps.push(Gap { t, message: "no estimate available".into() });
            continue;
        };
        match tails(model, f, &window, &config.alphas) {
            Ok(pairs) => {
                let date = series.dates()[t];
                for (&alpha, (var, es)) in config.alphas.iter().zip(pairs) {
                    run.forecasts.push(RiskForecast { t, date, alpha, var, es, model });
                }
            }
            Err(e) => {
                warn!("{model}: forecast failed at origin {t}: {e}");
                run.gaps.push(Gap { t, message: e.to_string() });
            }
        }
    }
    Ok(run)
}

/// `sum (alpha - I(r < q)) (r - q)`.
pub fn quantile_loss(r: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if r.len() != q.len() {
        return Err(Error::data(format!("{} returns but {} quantiles", r.len(), q.len())));
    }
    Ok(r.iter().zip(q).map(|(&r, &q)| (alpha - if r < q { 1.0 } else { 0.0 }) * (r - q)).sum())
}

/// Asymmetric-Laplace joint score for `(VaR, ES)`.
pub fn al_joint_loss(r: &[f64], q: &[f64], es: &[f64], alpha: f64) -> Result<f64> {
    if r.len() != q.len() || r.len() != es.len() {
        return Err(Error::data(format!("{} returns, {} quantiles, {} shortfalls", r.len(), q.len(), es.len())));
    }
    let mut total = 0.0;
    for ((&r, &q), &e) in r.iter().zip(q).zip(es) {
        if !(e < 0.0) {
            return Err(Error::domain(format!("expected shortfall must be negative, got {e}")));
        }
        let hit = if r < q { 1.0 } else { 0.0 };
        total += -((alpha - 1.0) / e).ln() - (r - q) * (alpha - hit) / (alpha * e);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Quantile,
    Joint,
}

impl LossKind {
    pub fn label(self) -> &'static str {
        match self {
            LossKind::Quantile => "quantile loss",
            LossKind::Joint => "AL joint loss",
        }
    }
}

/// Losses of every model on one series at one level, over the origins that
/// all models forecast.
pub fn score_series(runs: &[&[RiskForecast]], series: &JointSeries, alpha: f64, loss: LossKind) -> Result<Vec<f64>> {
    let picked: Vec<Vec<&RiskForecast>> =
        runs.iter().map(|f| f.iter().filter(|x| (x.alpha - alpha).abs() < 1e-12).collect()).collect();
    let mut common: Option<BTreeSet<usize>> = None;
    for p in &picked {
        let ts: BTreeSet<usize> = p.iter().map(|x| x.t).collect();
        common = Some(match common {
            None => ts,
            Some(c) => c.intersection(&ts).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Report(format!("no common forecast origins at alpha = {alpha}")));
    }
    let r: Vec<f64> = common.iter().map(|&t| series.returns()[t]).collect();
    picked
        .iter()
        .map(|p| {
            let kept: Vec<&&RiskForecast> = p.iter().filter(|x| common.contains(&x.t)).collect();
            let q: Vec<f64> = kept.iter().map(|x| x.var).collect();
            match loss {
                LossKind::Quantile => quantile_loss(&r, &q, alpha),
                LossKind::Joint => {
                    let es: Vec<f64> = kept.iter().map(|x| x.es).collect();
                    al_joint_loss(&r, &q, &es, alpha)
                }
            }
        })
        .collect()
}

/// Models-by-series loss table.
#[derive(Debug, Clone, Serialize)]
pub struct LossMatrix {
    pub models: Vec<String>,
    pub series: Vec<String>,
    /// `losses[model][series]`.
    pub losses: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub title: String,
    pub models: Vec<String>,
    pub series: Vec<String>,
    pub losses: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub avg_loss: Vec<f64>,
    pub avg_rank: Vec<f64>,
    /// 1 = favoured, 2 = runner-up, 0 = neither; ties share a mark.
    pub loss_mark: Vec<u8>,
    pub rank_mark: Vec<u8>,
}

/// Ranks with 1 for the smallest value; ties receive their mean rank.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn marks(values: &[f64]) -> Vec<u8> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    values
        .iter()
        .map(|v| {
            let same = |d: &f64| (v - d).abs() <= 1e-12 * v.abs().max(1.0);
            if distinct.first().is_some_and(same) {
                1
            } else if distinct.get(1).is_some_and(same) {
                2
            } else {
                0
            }
        })
        .collect()
}

pub fn tournament(title: &str, table: &LossMatrix) -> Result<BacktestReport> {
    let k = table.models.len();
    let s = table.series.len();
    if k < 2 || s == 0 {
        return Err(Error::Report(format!("a tournament needs at least two models and one series (got {k} x {s})")));
    }
    if table.losses.len() != k || table.losses.iter().any(|row| row.len() != s) {
        return Err(Error::Report("loss table shape does not match its labels".into()));
    }
    let mut losses = vec![vec![0.0; s]; k];
    for (i, row) in table.losses.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            losses[i][j] = cell
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Report(format!("missing loss for {} on {}", table.models[i], table.series[j])))?;
        }
    }
    let mut ranks = vec![vec![0.0; s]; k];
    for j in 0..s {
        let col: Vec<f64> = losses.iter().map(|row| row[j]).collect();
        for (i, r) in mean_ranks(&col).into_iter().enumerate() {
            ranks[i][j] = r;
        }
    }
    let avg = |rows: &Vec<Vec<f64>>| -> Vec<f64> { rows.iter().map(|r| r.iter().sum::<f64>() / s as f64).collect() };
    let avg_loss = avg(&losses);
    let avg_rank = avg(&ranks);
    Ok(BacktestReport {
        title: title.to_string(),
        models: table.models.clone(),
        series: table.series.clone(),
        loss_mark: marks(&avg_loss),
        rank_mark: marks(&avg_rank),
        losses,
        ranks,
        avg_loss,
        avg_rank,
    })
}

impl BacktestReport {
    /// Aligned table: models by series, then Avg Loss and Avg Rank. The
    /// favoured model is marked `*`, the runner-up `+`.
    pub fn to_text(&self) -> String {
        let mark = |m: u8| match m {
            1 => "*",
            2 => "+",
            _ => " ",
        };
        let width = self.models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
        let col = self.series.iter().map(|s| s.len()).max().unwrap_or(0).max(9);
        let mut out = format!("{}\n", self.title);
        out += &format!("{:<width$}", "Model");
        for s in &self.series {
            out += &format!(" {s:>col$}");
        }
        out += &format!(" {:>10} {:>10}\n", "Avg Loss", "Avg Rank");
        for (i, m) in self.models.iter().enumerate() {
            out += &format!("{m:<width$}");
            for v in &self.losses[i] {
                out += &format!(" {v:>col$.1}");
            }
            out += &format!(
                " {:>9.1}{} {:>9.2}{}\n",
                self.avg_loss[i],
                mark(self.loss_mark[i]),
                self.avg_rank[i],
                mark(self.rank_mark[i])
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["model".to_string()];
        header.extend(self.series.iter().cloned());
        header.extend(["avg_loss", "avg_rank", "loss_mark", "rank_mark"].map(String::from));
        w.write_record(&header)?;
        for (i, m) in self.models.iter().enumerate() {
            let mut row = vec![m.clone()];
            row.extend(self.losses[i].iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.avg_loss[i]));
            row.push(format!("{}", self.avg_rank[i]));
            row.push(self.loss_mark[i].to_string());
            row.push(self.rank_mark[i].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Forecasts of every model on every series, with loss tables per level.
#[derive(Debug, Clone, Serialize)]
pub struct Backtest {
    pub models: Vec<ModelId>,
    pub series: Vec<String>,
    /// `runs[series][model]`.
    pub runs: Vec<Vec<ForecastRun>>,
    pub reports: Vec<BacktestEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestEntry {
    pub alpha: f64,
    pub loss: LossKind,
    pub report: BacktestReport,
}

/// Runs `rolling_forecast` for each (series, model) pair and scores the results.
pub fn run_backtest(models: &[ModelId], series: &[(String, JointSeries)], config: &ForecastConfig) -> Result<Backtest> {
    if models.len() < 2 || series.is_empty() {
        return Err(Error::Config("a backtest needs at least two models and one series".into()));
    }
    for (_, s) in series {
        config.validate(s.len())?;
    }
    let jobs: Vec<(usize, usize)> = (0..series.len()).flat_map(|i| (0..models.len()).map(move |j| (i, j))).collect();
    let work = |&(i, j): &(usize, usize)| {
        let out = rolling_forecast(models[j], &series[i].1, config);
        log::info!("{} on {} done", models[j], series[i].0);
        out
    };
    #[cfg(feature = "parallel")]
    let done: Vec<Result<ForecastRun>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let done: Vec<Result<ForecastRun>> = jobs.iter().map(work).collect();

    let mut runs: Vec<Vec<ForecastRun>> = (0..series.len()).map(|_| Vec::with_capacity(models.len())).collect();
    for ((i, _), run) in jobs.iter().zip(done) {
        runs[*i].push(run?);
    }

    let mut reports = Vec::new();
    for loss in [LossKind::Quantile, LossKind::Joint] {
        for &alpha in &config.alphas {
            let mut losses = vec![vec![None; series.len()]; models.len()];
            for (i, (name, s)) in series.iter().enumerate() {
                let sets: Vec<&[RiskForecast]> = runs[i].iter().map(|r| r.forecasts.as_slice()).collect();
                match score_series(&sets, s, alpha, loss) {
                    Ok(v) => {
                        for (j, l) in v.into_iter().enumerate() {
                            losses[j][i] = Some(l);
                        }
                    }
                    Err(e) => warn!("{name}: {} at {alpha} not scored: {e}", loss.label()),
                }
            }
            let table = LossMatrix {
                models: models.iter().map(|m| m.label().to_string()).collect(),
                series: series.iter().map(|(n, _)| n.clone()).collect(),
                losses,
            };
            let title = format!("{}, alpha = {}%", loss.label(), alpha * 100.0);
            reports.push(BacktestEntry { alpha, loss, report: tournament(&title, &table)? });
        }
    }
    Ok(Backtest { models: models.to_vec(), series: series.iter().map(|(n, _)| n.clone()).collect(), runs, reports })
}

impl Backtest {
    pub fn report(&self, alpha: f64, loss: LossKind) -> Option<&BacktestReport> {
        self.reports.iter().find(|e| e.loss == loss && (e.alpha - alpha).abs() < 1e-12).map(|e| &e.report)
    }

    pub fn forecasts(&self) -> Vec<RiskForecast> {
        self.runs.iter().flatten().flat_map(|r| r.forecasts.iter().cloned()).collect()
    }

    /// Writes one forecast file per series plus CSV and text tables per level and loss.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (name, runs) in self.series.iter().zip(&self.runs) {
            let p = dir.join(format!("forecasts_{name}.csv"));
            let all: Vec<RiskForecast> = runs.iter().flat_map(|r| r.forecasts.iter().cloned()).collect();
            write_forecasts_csv(&p, &all)?;
            written.push(p);
        }
        let mut text = String::new();
        for e in &self.reports {
            let stem = match e.loss {
                LossKind::Quantile => "quantile_loss",
                LossKind::Joint => "joint_loss",
            };
            let p = dir.join(format!("{stem}_{}.csv", alpha_tag(e.alpha)));
            e.report.write_csv(&p)?;
            written.push(p);
            text += &e.report.to_text();
            text.push('\n');
        }
        let p = dir.join("tables.txt");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(written)
    }
}

/// `0.025` becomes `"2.5pct"`.
pub fn alpha_tag(alpha: f64) -> String {
    format!("{}pct", (alpha * 1000.0).round() / 10.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct ForecastRow {
    origin_index: usize,
    date: NaiveDate,
    alpha: f64,
    var: f64,
    es: f64,
    model: String,
}

pub fn write_forecasts_csv(path: &Path, forecasts: &[RiskForecast]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for f in forecasts {
        w.serialize(ForecastRow {
            origin_index: f.t,
            date: f.date,
            alpha: f.alpha,
            var: f.var,
            es: f.es,
            model: f.model.id().to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_forecasts_csv(path: &Path) -> Result<Vec<RiskForecast>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<ForecastRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 2, message: e.to_string() })?;
        out.push(RiskForecast {
            t: row.origin_index,
            date: row.date,
            alpha: row.alpha,
            var: row.var,
            es: row.es,
            model: row.model.parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_loss_examples() {
        assert_eq!(quantile_loss(&[-1.0, 2.0], &[-1.0, 2.0], 0.01).unwrap(), 0.0);
        assert_relative_eq!(quantile_loss(&[-3.0], &[-2.0], 0.01).unwrap(), 0.99, epsilon = 1e-15);
        assert_relative_eq!(quantile_loss(&[1.0], &[-2.0], 0.01).unwrap(), 0.03, epsilon = 1e-15);
        assert!(quantile_loss(&[1.0], &[], 0.01).is_err());
    }

    #[test]
    fn joint_loss_examples() {
        let l = al_joint_loss(&[0.0], &[-1.0], &[-1.0], 0.01).unwrap();
        assert_relative_eq!(l, -(0.99f64).ln() + 1.0, epsilon = 1e-14);
        assert_relative_eq!(l, 1.01005, epsilon = 1e-5);
        let l = al_joint_loss(&[-1.0], &[-1.0], &[-1.0], 0.01).unwrap();
        assert_relative_eq!(l, 0.01005, epsilon = 1e-5);
        assert!(matches!(al_joint_loss(&[0.0], &[-1.0], &[0.0], 0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(mean_ranks(&[2.0, 1.0, 3.0]), vec![2.0, 1.0, 3.0]);
        assert_eq!(mean_ranks(&[1.0, 1.0]), vec![1.5, 1.5]);
        assert_eq!(mean_ranks(&[5.0, 1.0, 5.0, 0.0]), vec![3.5, 2.0, 3.5, 1.0]);
    }

    fn matrix(rows: Vec<Vec<f64>>) -> LossMatrix {
        LossMatrix {
            models: (0..rows.len()).map(|i| format!("m{i}")).collect(),
            series: (0..rows[0].len()).map(|j| format!("s{j}")).collect(),
            losses: rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        }
    }

    #[test]
    fn two_model_tournament() {
        let rep = tournament("t", &matrix(vec![vec![1.0; 3], vec![2.0; 3]])).unwrap();
        assert_eq!(rep.avg_rank, vec![1.0, 2.0]);
        assert_eq!(rep.loss_mark, vec![1, 2]);
        let tied = tournament("t", &matrix(vec![vec![1.0; 3], vec![1.0; 3]])).unwrap();
        assert_eq!(tied.avg_rank, vec![1.5, 1.5]);
        assert_eq!(tied.rank_mark, vec![1, 1]);
    }

    #[test]
    fn ranks_survive_monotone_transforms() {
        let rows = vec![vec![3.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.5]];
        let a = tournament("t", &matrix(rows.clone())).unwrap();
        let b = tournament("t", &matrix(rows.iter().map(|r| r.iter().map(|v| v.ln() * 7.0 + 3.0).collect()).collect()))
            .unwrap();
        assert_eq!(a.ranks, b.ranks);
    }

    #[test]
    fn missing_cells_are_errors() {
        let mut m = matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        m.losses[1][0] = None;
        assert!(matches!(tournament("t", &m), Err(Error::Report(_))));
        assert!(tournament("t", &matrix(vec![vec![1.0]])).is_err());
    }

    #[test]
    fn model_ids_roundtrip() {
        for m in ModelId::ALL {
            assert_eq!(m.id().parse::<ModelId>().unwrap(), m);
        }
        assert!("garch".parse::<ModelId>().is_err());
    }

    #[test]
    fn report_text_has_summary_columns() {
        let rep = tournament("Quantile loss, 1%", &matrix(vec![vec![25.71, 29.2], vec![26.7, 30.0]])).unwrap();
        let text = rep.to_text();
        assert!(text.contains("Avg Loss") && text.contains("Avg Rank"));
        assert!(text.lines().nth(2).unwrap().contains("27.5*"));
    }
}
