//! Flat `key = value` pipeline configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rolecast_core::corpus::{ThresholdScope, WindowSpec};
use rolecast_core::dynamics::InactiveMode;
use rolecast_core::features::PopularityBaseline;
use rolecast_core::hawkes::{geometric_lag_pmf, EmConfig, HawkesParams};
use sha2::{Digest, Sha256};

/// Every recognised key with its default. An empty default means unset.
const DEFAULTS: &[(&str, &str)] = &[
    ("corpus", ""),
    ("registry", ""),
    ("lexicons", ""),
    ("patterns", ""),
    ("out", "rolecast-out"),
    ("seed", "0"),
    ("threads", ""),
    ("window_start", "2018-01-01"),
    ("window_months", "6"),
    ("window_count", "4"),
    ("account_threshold", "10"),
    ("threshold_scope", "full_span"),
    ("threshold_sensitivity", "8,6,4"),
    ("popularity_baseline", "rest"),
    ("popularity_epsilon", "1"),
    ("k", "5"),
    ("n_init", "10"),
    ("kmeans_max_iters", "300"),
    ("kmeans_tol", "1e-6"),
    ("elbow_k_min", "2"),
    ("elbow_k_max", "10"),
    ("role_labels", ""),
    ("inactive_mode", "exclude"),
    ("influence_window", "0"),
    ("min_link_accounts", "10"),
    ("min_link_roles", "3"),
    ("bin_width", ""),
    ("bin_percentile", "10"),
    ("lag_horizon", "2880"),
    ("em_tol", "1e-6"),
    ("em_max_iters", "500"),
    ("per_pair_lags", "false"),
    ("sim_bins", "50000"),
    ("sim_background", "0.01,0.02,0.005"),
    ("sim_weights", "0.35,0.2,0.15;0.15,0.3,0.2;0.2,0.15,0.3"),
    ("sim_lag_p", "0.3"),
    ("sim_lag_horizon", "20"),
];

/// Keys that do not change any artifact's content.
const UNHASHED: &[&str] = &["out", "threads"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
    /// Directory of the config file; relative paths read from the file
    /// resolve against it.
    base: Option<PathBuf>,
    from_file: BTreeSet<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            base: None,
            from_file: BTreeSet::new(),
        }
    }
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(src: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            cfg.set(k.trim(), v.trim())
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&src).with_context(|| format!("in config {}", path.display()))?;
        cfg.from_file = src
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, _)| k.trim().to_string())
            .collect();
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn resolve(&self, key: &str, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        match &self.base {
            Some(base) if p.is_relative() && self.from_file.contains(key) => base.join(p),
            _ => p,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => bail!("unknown config key `{key}`"),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{pair}` is not key=value"))?;
        self.from_file.remove(k.trim());
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| anyhow!("config `{key}` = `{}`: {e}", self.raw(key)))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parsed(key).map(Some)
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, sep: char) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(sep)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| anyhow!("config `{key}` item `{s}`: {e}"))
            })
            .collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| self.resolve(key, v))
    }

    /// Path that must be set and exist.
    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        let p = self
            .path(key)
            .ok_or_else(|| anyhow!("config `{key}` is required for this command"))?;
        if !p.exists() {
            bail!("{key} file not found: {}", p.display());
        }
        Ok(p)
    }

    /// Optional path that must exist when set.
    pub fn existing_path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.path(key) {
            Some(p) if !p.exists() => bail!("{key} file not found: {}", p.display()),
            other => Ok(other),
        }
    }

    pub fn lexicon_paths(&self) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = self
            .raw("lexicons")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.resolve("lexicons", s))
            .collect();
        for p in &paths {
            if !p.exists() {
                bail!("lexicon file not found: {}", p.display());
            }
        }
        Ok(paths)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve("out", self.raw("out"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed")
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        self.optional("threads")
    }

    pub fn window(&self) -> Result<WindowSpec> {
        let date = chrono::NaiveDate::parse_from_str(self.raw("window_start"), "%Y-%m-%d")
            .with_context(|| format!("config `window_start` = `{}`", self.raw("window_start")))?;
        let start = date
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp();
        Ok(WindowSpec::new(
            start,
            self.parsed("window_months")?,
            self.parsed("window_count")?,
        )?)
    }

    pub fn account_threshold(&self) -> Result<usize> {
        self.parsed("account_threshold")
    }

    pub fn threshold_scope(&self) -> Result<ThresholdScope> {
        match self.raw("threshold_scope") {
            "full_span" => Ok(ThresholdScope::FullSpan),
            "per_window" => Ok(ThresholdScope::PerWindow),
            other => {
                bail!("config `threshold_scope`: expected full_span or per_window, got `{other}`")
            }
        }
    }

    pub fn sensitivity_thresholds(&self) -> Result<Vec<usize>> {
        self.list("threshold_sensitivity", ',')
    }

    pub fn popularity_baseline(&self) -> Result<PopularityBaseline> {
        match self.raw("popularity_baseline") {
            "rest" => Ok(PopularityBaseline::Rest),
            "all_links" => Ok(PopularityBaseline::AllLinks),
            other => {
                bail!("config `popularity_baseline`: expected rest or all_links, got `{other}`")
            }
        }
    }

    pub fn popularity_epsilon(&self) -> Result<f64> {
        self.parsed("popularity_epsilon")
    }

    pub fn k(&self) -> Result<usize> {
        self.parsed("k")
    }

    pub fn n_init(&self) -> Result<usize> {
        self.parsed("n_init")
    }

    pub fn kmeans_max_iters(&self) -> Result<usize> {
        self.parsed("kmeans_max_iters")
    }

    pub fn kmeans_tol(&self) -> Result<f64> {
        self.parsed("kmeans_tol")
    }

    pub fn elbow_range(&self) -> Result<(usize, usize)> {
        Ok((self.parsed("elbow_k_min")?, self.parsed("elbow_k_max")?))
    }

    pub fn role_labels(&self) -> Vec<String> {
        self.raw("role_labels")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn inactive_mode(&self) -> Result<InactiveMode> {
        match self.raw("inactive_mode") {
            "exclude" => Ok(InactiveMode::Exclude),
            "as_state" => Ok(InactiveMode::AsState),
            other => bail!("config `inactive_mode`: expected exclude or as_state, got `{other}`"),
        }
    }

    pub fn influence_window(&self) -> Result<usize> {
        self.parsed("influence_window")
    }

    pub fn link_thresholds(&self) -> Result<(usize, usize)> {
        Ok((
            self.parsed("min_link_accounts")?,
            self.parsed("min_link_roles")?,
        ))
    }

    pub fn bin_width(&self) -> Result<Option<u64>> {
        self.optional("bin_width")
    }

    pub fn bin_percentile(&self) -> Result<f64> {
        self.parsed("bin_percentile")
    }

    pub fn em_config(&self, seed: u64) -> Result<EmConfig> {
        Ok(EmConfig {
            lag_horizon: self.parsed("lag_horizon")?,
            max_iters: self.parsed("em_max_iters")?,
            tol: self.parsed("em_tol")?,
            seed,
            per_pair_lags: self.parsed("per_pair_lags")?,
        })
    }

    pub fn sim_bins(&self) -> Result<usize> {
        self.parsed("sim_bins")
    }

    pub fn sim_params(&self) -> Result<HawkesParams> {
        let background_rates: Vec<f64> = self.list("sim_background", ',')?;
        let weights: Vec<Vec<f64>> = self
            .raw("sim_weights")
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| anyhow!("config `sim_weights`: {e}"))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let p: f64 = self.parsed("sim_lag_p")?;
        if !(p > 0.0 && p <= 1.0) {
            bail!("config `sim_lag_p` must be in (0, 1], got {p}");
        }
        let params = HawkesParams {
            background_rates,
            weights,
            lag_pmf: geometric_lag_pmf(p, self.parsed("sim_lag_horizon")?),
            pair_lag_pmf: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// SHA-256 over the canonical `key=value` listing, excluding keys that
    /// only affect where or how fast outputs are written.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if UNHASHED.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Canonical listing of every hashed key, defaults included.
    pub fn render(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut cfg = PipelineConfig::parse("# c\nk = 7\nseed=3\n").unwrap();
        assert_eq!(cfg.k().unwrap(), 7);
        cfg.set_pair("k=4").unwrap();
        assert_eq!(cfg.k().unwrap(), 4);
        assert_eq!(cfg.seed().unwrap(), 3);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(PipelineConfig::parse("colour = red\n").is_err());
        assert!(PipelineConfig::parse("no equals sign\n").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.set("out", "/elsewhere").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("k", "6").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn window_defaults() {
        let w = PipelineConfig::default().window().unwrap();
        assert_eq!(w.start, 1_514_764_800);
        assert_eq!((w.window_length_months, w.window_count), (6, 4));
    }

    #[test]
    fn default_simulation_is_stable() {
        let p = PipelineConfig::default().sim_params().unwrap();
        assert_eq!(p.k(), 3);
        assert!(p.spectral_radius() < 1.0);
    }

    #[test]
    fn render_round_trips() {
        let mut a = PipelineConfig::default();
        a.set("k", "9").unwrap();
        assert_eq!(PipelineConfig::parse(&a.render()).unwrap(), a);
    }

    #[test]
    fn file_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.conf");
        fs::write(&path, "corpus = posts.jsonl\n").unwrap();
        fs::write(dir.path().join("posts.jsonl"), "").unwrap();
        let mut cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(
            cfg.required_path("corpus").unwrap(),
            dir.path().join("posts.jsonl")
        );
        cfg.set_pair("corpus=elsewhere.jsonl").unwrap();
        assert!(cfg.required_path("corpus").is_err());
    }
}
