use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rtmg_core::mcmc::McmcConfig;
use rtmg_core::risk::{ForecastConfig, ModelId, DEFAULT_ALPHAS};

/// `key = value` lines; `#` starts a comment. Later keys win.
pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_kv(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got '{raw}'", i + 1);
        };
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            bail!("line {}: unknown key '{}' (known: {})", i + 1, k.trim(), KEYS.join(", "));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub const KEYS: &[&str] = &[
    "model",
    "data",
    "n",
    "m",
    "stride",
    "alpha",
    "seed",
    "out",
    "replications",
    "epoch_len",
    "imh_len",
    "discard",
    "max_epochs",
    "warm_start",
];

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub models: Vec<ModelId>,
    pub data: Vec<PathBuf>,
    pub n: Option<usize>,
    pub m: usize,
    pub stride: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub replications: usize,
    pub mcmc: McmcConfig,
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("{key} = '{v}': {e}"))
}

impl RunConfig {
    pub fn resolve(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| kv.get(k).map(String::as_str);
        let models = match get("model") {
            Some(v) => list(v).iter().map(|m| m.parse::<ModelId>()).collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let alphas = match get("alpha") {
            Some(v) => list(v).iter().map(|a| num::<f64>("alpha", a)).collect::<Result<Vec<_>>>()?,
            None => DEFAULT_ALPHAS.to_vec(),
        };
        if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            bail!("alpha values must lie in (0, 0.5), got {alphas:?}");
        }
        let mut mcmc = McmcConfig::default();
        if let Some(v) = get("epoch_len") {
            mcmc.epoch_len = num("epoch_len", v)?;
        }
        if let Some(v) = get("imh_len") {
            mcmc.imh_len = num("imh_len", v)?;
        }
        if let Some(v) = get("discard") {
            mcmc.discard = num("discard", v)?;
        }
        if let Some(v) = get("max_epochs") {
            mcmc.max_epochs = num("max_epochs", v)?;
        }
        if let Some(v) = get("warm_start") {
            mcmc.warm_start = num("warm_start", v)?;
        }
        mcmc.validate()?;
        let cfg = RunConfig {
            models,
            data: get("data").map(|v| list(v).into_iter().map(PathBuf::from).collect()).unwrap_or_default(),
            n: get("n").map(|v| num("n", v)).transpose()?,
            m: get("m").map(|v| num("m", v)).transpose()?.unwrap_or(100),
            stride: get("stride").map(|v| num("stride", v)).transpose()?.unwrap_or(1),
            alphas,
            seed: get("seed").map(|v| num("seed", v)).transpose()?.unwrap_or(20_240_601),
            out: PathBuf::from(get("out").unwrap_or("out")),
            replications: get("replications").map(|v| num("replications", v)).transpose()?.unwrap_or(100),
            mcmc,
        };
        if cfg.m == 0 || cfg.stride == 0 || cfg.replications == 0 || cfg.n == Some(0) {
            bail!("n, m, stride and replications must be positive");
        }
        Ok(cfg)
    }

    pub fn forecast(&self) -> ForecastConfig {
        ForecastConfig {
            n: self.n.unwrap_or(1000),
            m: self.m,
            stride: self.stride,
            alphas: self.alphas.clone(),
            seed: self.seed,
            mcmc: self.mcmc.clone(),
        }
    }

    /// The snapshot written next to every run's outputs; it parses back to the same settings.
    pub fn snapshot(&self, command: &str) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = format!("# resolved configuration for `{command}`\n");
        let mut line = |k: &str, v: String| {
            if v.is_empty() {
                s.push_str(&format!("# {k} unset\n"));
            } else {
                s.push_str(&format!("{k} = {v}\n"));
            }
        };
        line("model", join(self.models.iter().map(|m| m.id().to_string()).collect()));
        line("data", join(self.data.iter().map(|p| p.display().to_string()).collect()));
        line("n", self.n.map(|n| n.to_string()).unwrap_or_default());
        line("m", self.m.to_string());
        line("stride", self.stride.to_string());
        line("alpha", join(self.alphas.iter().map(|a| a.to_string()).collect()));
        line("seed", self.seed.to_string());
        line("out", self.out.display().to_string());
        line("replications", self.replications.to_string());
        line("epoch_len", self.mcmc.epoch_len.to_string());
        line("imh_len", self.mcmc.imh_len.to_string());
        line("discard", self.mcmc.discard.to_string());
        line("max_epochs", self.mcmc.max_epochs.to_string());
        line("warm_start", self.mcmc.warm_start.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = parse_kv("# run\nmodel = rtmg, gjr-t\nalpha=0.01,0.05 # two levels\n\nepoch-len = 5000\n").unwrap();
        let cfg = RunConfig::resolve(&kv).unwrap();
        assert_eq!(cfg.models, vec![ModelId::Rtmg, ModelId::Gjr]);
        assert_eq!(cfg.alphas, vec![0.01, 0.05]);
        assert_eq!(cfg.mcmc.epoch_len, 5000);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse_kv("colour = red").is_err());
        assert!(parse_kv("just words").is_err());
        let kv = parse_kv("alpha = 0.7").unwrap();
        assert!(RunConfig::resolve(&kv).is_err());
        let kv = parse_kv("model = garch").unwrap();
        assert!(RunConfig::resolve(&kv).is_err());
    }

    #[test]
    fn snapshot_reparses_to_the_same_settings() {
        let kv = parse_kv("model = rg\nn = 500\nm = 20\nseed = 9\nalpha = 0.025\nimh_len = 3000\n").unwrap();
        let cfg = RunConfig::resolve(&kv).unwrap();
        let again = RunConfig::resolve(&parse_kv(&cfg.snapshot("x")).unwrap()).unwrap();
        assert_eq!(again.snapshot("x"), cfg.snapshot("x"));
        assert_eq!(again.n, Some(500));
        assert_eq!(again.mcmc.imh_len, 3000);
    }
}
