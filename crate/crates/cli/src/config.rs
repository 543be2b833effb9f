//! Experiment configuration: a flat `key = value` text format with `#`
//! comments, plus environment overrides for the output directory
//! (`CPB_OUT_DIR`) and worker count (`CPB_WORKERS`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use cpb_core::corpus::CorpusSpec;
use cpb_core::predictor::SeriesMode;
use cpb_core::sharing::{IntersectionMode, SharingStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ts,
    TsCa,
    TsCaKnn,
    FreudA,
    FreudB,
    Agglomerative,
    Kmeans,
    Knn,
}

impl Method {
    /// Tag used in result CSVs.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ts => "TS",
            Method::TsCa => "TS-CA",
            Method::TsCaKnn => "TS-CA-KNN",
            Method::FreudA => "FREUD-A",
            Method::FreudB => "FREUD-B",
            Method::Agglomerative => "agglomerative",
            Method::Kmeans => "kmeans",
            Method::Knn => "knn",
        }
    }

    /// Whether the method sweeps the `k` list.
    pub fn uses_k(self) -> bool {
        !matches!(self, Method::Ts | Method::TsCa)
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ts" => Ok(Method::Ts),
            "ts-ca" | "ts_ca" => Ok(Method::TsCa),
            "ts-ca-knn" | "ts_ca_knn" => Ok(Method::TsCaKnn),
            "freud-a" | "freud_a" => Ok(Method::FreudA),
            "freud-b" | "freud_b" => Ok(Method::FreudB),
            "agglomerative" => Ok(Method::Agglomerative),
            "kmeans" | "k-means" => Ok(Method::Kmeans),
            "knn" | "k-nn" => Ok(Method::Knn),
            other => bail!(
                "unknown method '{other}' (expected ts, ts-ca, ts-ca-knn, freud-a, freud-b, \
                 agglomerative, kmeans, knn)"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Plaintext,
    Psi,
    ServerAided,
}

impl Backend {
    pub fn tag(self) -> &'static str {
        match self {
            Backend::Plaintext => "plaintext",
            Backend::Psi => "psi",
            Backend::ServerAided => "server-aided",
        }
    }
}

impl FromStr for Backend {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plaintext" => Ok(Backend::Plaintext),
            "psi" => Ok(Backend::Psi),
            "server-aided" | "server_aided" => Ok(Backend::ServerAided),
            other => bail!("unknown backend '{other}' (expected plaintext, psi, server-aided)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum CorpusSource {
    Path(PathBuf),
    Synthetic(CorpusSpec),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub strategies: Vec<SharingStrategy>,
    pub backend: Backend,
    pub alpha: f64,
    pub tau: f64,
    pub series: SeriesMode,
    pub intersection: IntersectionMode,
    /// k-means / k-NN outlier cutoff percentile; `None` disables trimming.
    pub threshold_percentile: Option<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub dump_o2o: bool,
}

fn parse_list<T: FromStr>(value: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>> = value
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow!("bad {what} '{t}': {e}")))
        .collect();
    let items = items?;
    if items.is_empty() {
        bail!("{what} list is empty");
    }
    Ok(items)
}

impl ExperimentConfig {
    /// Parse the flat key=value format. Lines starting with `#` and blank
    /// lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            kv.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_pairs(kv)
    }

    fn from_pairs(mut kv: BTreeMap<String, String>) -> Result<Self> {
        let mut take = |key: &str| kv.remove(key);

        let seed: u64 = take("seed").map(|v| v.parse()).transpose()?.unwrap_or(1);

        let corpus = if let Some(path) = take("corpus") {
            CorpusSource::Path(PathBuf::from(path))
        } else {
            let n_orgs: usize =
                take("synthetic.n_orgs").map(|v| v.parse()).transpose()?.unwrap_or(70);
            let n_days: u32 =
                take("synthetic.n_days").map(|v| v.parse()).transpose()?.unwrap_or(15);
            let groups: usize =
                take("synthetic.groups").map(|v| v.parse()).transpose()?.unwrap_or(7);
            let persistence: f64 =
                take("synthetic.persistence").map(|v| v.parse()).transpose()?.unwrap_or(0.8);
            let base_rate: f64 =
                take("synthetic.base_rate").map(|v| v.parse()).transpose()?.unwrap_or(100.0);
            let noise_rate: f64 =
                take("synthetic.noise_rate").map(|v| v.parse()).transpose()?.unwrap_or(300.0);
            CorpusSource::Synthetic(CorpusSpec::new(
                n_orgs,
                n_days,
                groups,
                persistence,
                base_rate,
                noise_rate,
                seed,
            ))
        };

        let methods: Vec<Method> = match take("methods") {
            Some(v) => parse_list(&v, "method")?,
            None => vec![Method::Kmeans],
        };
        let ks: Vec<usize> = match take("k") {
            Some(v) => parse_list(&v, "k")?,
            None => vec![5],
        };
        let strategies: Vec<SharingStrategy> = match take("strategies") {
            Some(v) => v
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse().map_err(|e| anyhow!("bad strategy: {e}")))
                .collect::<Result<_>>()?,
            None => vec![SharingStrategy::Local, SharingStrategy::Intersection],
        };
        if strategies.is_empty() {
            bail!("strategy list is empty");
        }

        let backend: Backend = take("backend").map(|v| v.parse()).transpose()?.unwrap_or_default();
        let alpha: f64 = take("alpha").map(|v| v.parse()).transpose()?.unwrap_or(0.9);
        let tau: f64 = take("tau").map(|v| v.parse()).transpose()?.unwrap_or(0.5);
        let series = match take("series").as_deref() {
            None | Some("binary") => SeriesMode::Binary,
            Some("counts") => SeriesMode::Counts,
            Some(other) => bail!("unknown series mode '{other}' (binary or counts)"),
        };
        let intersection = match take("intersection").as_deref() {
            None | Some("unique") => IntersectionMode::UniqueSources,
            Some("min-multiplicity") | Some("min_multiplicity") => {
                IntersectionMode::MinMultiplicity
            }
            Some(other) => bail!("unknown intersection mode '{other}'"),
        };
        let threshold_percentile = match take("threshold_percentile").as_deref() {
            None => Some(40.0),
            Some("none") | Some("off") => None,
            Some(v) => Some(v.parse::<f64>().context("threshold_percentile")?),
        };
        let out_dir = PathBuf::from(take("out").unwrap_or_else(|| "results".into()));
        let dump_o2o = match take("dump_o2o").as_deref() {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => bail!("dump_o2o must be true or false, got '{other}'"),
        };

        if let Some(unknown) = kv.keys().next() {
            bail!("unknown config key '{unknown}'");
        }

        let mut config = ExperimentConfig {
            corpus,
            methods,
            ks,
            strategies,
            backend,
            alpha,
            tau,
            series,
            intersection,
            threshold_percentile,
            out_dir,
            seed,
            dump_o2o,
        };
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    /// `CPB_OUT_DIR` overrides the output directory.
    fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var("CPB_OUT_DIR") {
            if !dir.is_empty() {
                self.out_dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1)");
        }
        if self.tau < 0.0 {
            bail!("tau must be non-negative");
        }
        if let CorpusSource::Synthetic(spec) = &self.corpus {
            spec.validate().map_err(|e| anyhow!("synthetic spec: {e}"))?;
        }
        if self.ks.is_empty() {
            bail!("k list is empty");
        }
        Ok(())
    }

    /// Canonical one-line-per-key echo, written into output headers so a
    /// result file pins the run that produced it.
    pub fn echo(&self) -> String {
        let mut lines = Vec::new();
        match &self.corpus {
            CorpusSource::Path(p) => lines.push(format!("corpus={}", p.display())),
            CorpusSource::Synthetic(s) => {
                lines.push(format!(
                    "synthetic=n_orgs:{},n_days:{},groups:{},persistence:{},base_rate:{},noise_rate:{}",
                    s.n_orgs, s.n_days, s.attacker_groups, s.persistence, s.base_rate, s.noise_rate
                ));
            }
        }
        lines.push(format!(
            "methods={}",
            self.methods.iter().map(|m| m.tag()).collect::<Vec<_>>().join(",")
        ));
        lines.push(format!(
            "k={}",
            self.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
        ));
        lines.push(format!(
            "strategies={}",
            self.strategies.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
        ));
        lines.push(format!("backend={}", self.backend.tag()));
        lines.push(format!("alpha={}", self.alpha));
        lines.push(format!("tau={}", self.tau));
        lines.push(format!(
            "series={}",
            match self.series {
                SeriesMode::Binary => "binary",
                SeriesMode::Counts => "counts",
            }
        ));
        lines.push(format!(
            "intersection={}",
            match self.intersection {
                IntersectionMode::UniqueSources => "unique",
                IntersectionMode::MinMultiplicity => "min-multiplicity",
            }
        ));
        lines.push(format!(
            "threshold_percentile={}",
            self.threshold_percentile.map_or("none".into(), |p| p.to_string())
        ));
        lines.push(format!("seed={}", self.seed));
        lines.join("\n")
    }
}

/// Parse a corpus-generator spec file (same key=value format).
pub fn parse_corpus_spec(text: &str) -> Result<CorpusSpec> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |key: &str, default: &str| kv.get(key).cloned().unwrap_or_else(|| default.into());
    let spec = CorpusSpec::new(
        get("n_orgs", "70").parse()?,
        get("n_days", "15").parse()?,
        get("groups", "7").parse()?,
        get("persistence", "0.8").parse()?,
        get("base_rate", "100").parse()?,
        get("noise_rate", "300").parse()?,
        get("seed", "1").parse()?,
    );
    spec.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
# experiment
synthetic.n_orgs = 12
synthetic.n_days = 8
synthetic.groups = 3
methods = kmeans,ts
k = 2,3
strategies = local,intersection,global
backend = plaintext
alpha = 0.9
tau = 0.5
out = /tmp/resultsX
seed = 9
";
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.methods, vec![Method::Kmeans, Method::Ts]);
        assert_eq!(config.ks, vec![2, 3]);
        assert_eq!(config.strategies.len(), 3);
        assert_eq!(config.seed, 9);
        match &config.corpus {
            CorpusSource::Synthetic(s) => {
                assert_eq!(s.n_orgs, 12);
                assert_eq!(s.seed, 9);
            }
            _ => panic!("expected synthetic corpus"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let config = ExperimentConfig::parse("synthetic.n_orgs = 10\n").unwrap();
        assert_eq!(config.alpha, 0.9);
        assert_eq!(config.tau, 0.5);
        assert_eq!(config.threshold_percentile, Some(40.0));
        assert_eq!(config.backend, Backend::Plaintext);
    }

    #[test]
    fn unknown_keys_and_methods_are_rejected() {
        assert!(ExperimentConfig::parse("bogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("methods = sorcery\n").is_err());
        assert!(ExperimentConfig::parse("alpha = 1.5\n").is_err());
    }

    #[test]
    fn echo_is_deterministic() {
        let a = ExperimentConfig::parse("seed = 3\n").unwrap().echo();
        let b = ExperimentConfig::parse("seed = 3\n").unwrap().echo();
        assert_eq!(a, b);
    }
}
