//! Run configuration, read from a TOML document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::market_data::{DEFAULT_PERIODS_PER_YEAR, DEFAULT_WINDOW};
use crate::qubo::Encoding;
use crate::reduction::{DEFAULT_HP_LAMBDA, DEFAULT_MAX_CLUSTERS, DEFAULT_PLATEAU_TOL};
use crate::sampler::SamplerConfig;
use crate::trajectory::{HoldingRule, PostSelection, Rho};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrendSource {
    /// Log prices, so the trend shape does not depend on the price level.
    #[default]
    LogPrices,
    Prices,
    Returns,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RhoSetting {
    Value(f64),
    Named(String),
}

impl Default for RhoSetting {
    fn default() -> Self {
        RhoSetting::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    #[serde(default = "default_hp_lambda")]
    pub hp_lambda: f64,
    #[serde(default)]
    pub trend_source: TrendSource,
    #[serde(default = "default_max_clusters")]
    pub max_clusters: usize,
    #[serde(default = "default_plateau_tol")]
    pub plateau_tol: f64,
    /// Fixed cluster count; the elbow rule picks one when absent.
    #[serde(default)]
    pub n_clusters: Option<usize>,
    #[serde(default)]
    pub risk_slack: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            hp_lambda: DEFAULT_HP_LAMBDA,
            trend_source: TrendSource::LogPrices,
            max_clusters: DEFAULT_MAX_CLUSTERS,
            plateau_tol: DEFAULT_PLATEAU_TOL,
            n_clusters: None,
            risk_slack: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_reads")]
    pub n_reads: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    pub beta_initial: Option<f64>,
    pub beta_final: Option<f64>,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            n_reads: default_reads(),
            sweeps: default_sweeps(),
            beta_initial: None,
            beta_final: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPackage {
    pub label: String,
    /// Annualized volatility ceiling for asset pre-selection; none = no cap.
    pub vol_cap: Option<f64>,
    pub gamma: Option<f64>,
    /// Candidate risk aversions; the one whose realized volatility comes
    /// closest to the cap from below is kept.
    pub gamma_grid: Option<Vec<f64>>,
}

impl RiskPackage {
    pub fn cap(&self) -> f64 {
        self.vol_cap.unwrap_or(f64::INFINITY)
    }

    pub fn gammas(&self) -> Vec<f64> {
        match (&self.gamma_grid, self.gamma) {
            (Some(grid), _) => grid.clone(),
            (None, Some(g)) => vec![g],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_ppy")]
    pub periods_per_year: u32,
    /// Forecast step `t` from a window that includes day `t` itself.
    #[serde(default)]
    pub in_sample: bool,
    #[serde(default = "default_hold")]
    pub hold: usize,
    #[serde(default = "default_bundles")]
    pub bundles: u32,
    pub bit_depth: Option<u32>,
    pub diversification_cap: Option<f64>,
    #[serde(default)]
    pub rho: RhoSetting,
    #[serde(default = "default_pool_limit")]
    pub pool_limit: usize,
    #[serde(default)]
    pub resample: bool,
    #[serde(default = "default_baselines")]
    pub baseline_count: usize,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub packages: Vec<RiskPackage>,
}

fn default_hp_lambda() -> f64 {
    DEFAULT_HP_LAMBDA
}
fn default_max_clusters() -> usize {
    DEFAULT_MAX_CLUSTERS
}
fn default_plateau_tol() -> f64 {
    DEFAULT_PLATEAU_TOL
}
fn default_reads() -> usize {
    SamplerConfig::default().n_reads
}
fn default_sweeps() -> usize {
    SamplerConfig::default().sweeps
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_ppy() -> u32 {
    DEFAULT_PERIODS_PER_YEAR
}
fn default_hold() -> usize {
    7
}
fn default_bundles() -> u32 {
    5
}
fn default_pool_limit() -> usize {
    PostSelection::default().pool_limit
}
fn default_baselines() -> usize {
    1000
}

impl RunConfig {
    /// Parses and validates; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "document".into());
            Error::config(field, e.message().to_string())
        })?;
        if cfg.input.is_relative() {
            cfg.input = base_dir.join(&cfg.input);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base_dir.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config("window", "must be at least 2"));
        }
        if self.periods_per_year == 0 {
            return Err(Error::config("periods_per_year", "must be positive"));
        }
        self.holding_rule()?;
        if self.bundles == 0 {
            return Err(Error::config("bundles", "must be at least 1"));
        }
        match (self.bit_depth, self.diversification_cap) {
            (Some(_), Some(_)) => {
                return Err(Error::config("bit_depth", "set either bit_depth or diversification_cap, not both"))
            }
            (None, None) => return Err(Error::config("bit_depth", "one of bit_depth or diversification_cap is required")),
            _ => {}
        }
        self.encoding(1).map_err(|e| Error::config("bit_depth", e.to_string()))?;
        self.rho()?;
        if self.pool_limit == 0 {
            return Err(Error::config("pool_limit", "must be at least 1"));
        }
        if self.baseline_count == 0 {
            return Err(Error::config("baseline_count", "must be at least 1"));
        }
        let r = &self.reduction;
        if !(r.hp_lambda >= 0.0) || !r.hp_lambda.is_finite() {
            return Err(Error::config("reduction.hp_lambda", "must be finite and >= 0"));
        }
        if r.max_clusters == 0 {
            return Err(Error::config("reduction.max_clusters", "must be at least 1"));
        }
        if !(r.plateau_tol > 0.0) {
            return Err(Error::config("reduction.plateau_tol", "must be positive"));
        }
        if r.n_clusters == Some(0) {
            return Err(Error::config("reduction.n_clusters", "must be at least 1"));
        }
        if !(r.risk_slack >= 0.0) {
            return Err(Error::config("reduction.risk_slack", "must be >= 0"));
        }
        self.sampler_config().validate()?;
        if self.packages.is_empty() {
            return Err(Error::config("packages", "at least one risk package is required"));
        }
        for (i, p) in self.packages.iter().enumerate() {
            let field = |f: &str| format!("packages[{i}].{f}");
            if p.label.is_empty() || p.label == crate::artifacts::BASELINE_LABEL {
                return Err(Error::config(field("label"), format!("invalid label {:?}", p.label)));
            }
            if !p.label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::config(field("label"), "use only letters, digits, `-`, `_` or `.`"));
            }
            if self.packages[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::config(field("label"), format!("duplicate label {:?}", p.label)));
            }
            if let Some(cap) = p.vol_cap {
                if !(cap > 0.0) {
                    return Err(Error::config(field("vol_cap"), "must be positive"));
                }
            }
            let gammas = p.gammas();
            if gammas.is_empty() {
                return Err(Error::config(field("gamma"), "set gamma or a non-empty gamma_grid"));
            }
            if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
                return Err(Error::config(field("gamma"), "risk aversion must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn holding_rule(&self) -> Result<HoldingRule> {
        HoldingRule::new(self.hold)
    }

    pub fn encoding(&self, n_assets: usize) -> Result<Encoding> {
        match (self.bit_depth, self.diversification_cap) {
            (Some(depth), _) => Encoding::new(n_assets, depth, self.bundles),
            (None, Some(cap)) => Encoding::diversified(n_assets, self.bundles, cap),
            (None, None) => Err(Error::config("bit_depth", "missing")),
        }
    }

    pub fn rho(&self) -> Result<Rho> {
        match &self.rho {
            RhoSetting::Named(s) if s == "auto" => Ok(Rho::Auto),
            RhoSetting::Named(s) => Err(Error::config("rho", format!("expected \"auto\" or a number, got {s:?}"))),
            RhoSetting::Value(v) if *v >= 0.0 && v.is_finite() => Ok(Rho::Fixed(*v)),
            RhoSetting::Value(v) => Err(Error::config("rho", format!("must be finite and >= 0, got {v}"))),
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        let beta_range = match (s.beta_initial, s.beta_final) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        };
        SamplerConfig {
            n_reads: s.n_reads,
            sweeps: s.sweeps,
            beta_range,
            seed: s.seed.unwrap_or(self.seed),
        }
    }

    pub fn post_selection(&self) -> PostSelection {
        PostSelection {
            pool_limit: self.pool_limit,
            resample: self.resample,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        input = "prices.csv"
        output_dir = "out"
        bit_depth = 2
        [[packages]]
        label = "p10"
        vol_cap = 0.10
        gamma = 2.0
    "#;

    #[test]
    fn defaults_and_paths() {
        let cfg = RunConfig::from_toml_str(BASE, Path::new("/data")).unwrap();
        assert_eq!(cfg.input, PathBuf::from("/data/prices.csv"));
        assert_eq!(cfg.hold, 7);
        assert_eq!(cfg.bundles, 5);
        assert_eq!(cfg.window, 60);
        assert_eq!(cfg.rho().unwrap(), Rho::Auto);
        assert_eq!(cfg.sampler_config().n_reads, 512);
        assert_eq!(cfg.reduction.hp_lambda, 10_000.0);
    }

    #[test]
    fn zero_hold_rejected() {
        let text = format!("hold = 0\n{BASE}");
        match RunConfig::from_toml_str(&text, Path::new(".")) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "hold"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        let bad = [
            ("rho = \"big\"", "rho"),
            ("rho = -1.0", "rho"),
            ("window = 1", "window"),
            ("diversification_cap = 0.5", "bit_depth"),
            ("pool_limit = 0", "pool_limit"),
        ];
        for (line, field) in bad {
            let text = format!("{line}\n{BASE}");
            match RunConfig::from_toml_str(&text, Path::new(".")) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{line}"),
                other => panic!("{line}: expected config error, got {other:?}"),
            }
        }
        let no_pkg = "input = \"a\"\noutput_dir = \"b\"\nbit_depth = 2\npackages = []\n";
        assert!(RunConfig::from_toml_str(no_pkg, Path::new(".")).is_err());
    }

    #[test]
    fn numeric_rho_and_unknown_keys() {
        let text = format!("rho = 3.5\n{BASE}");
        let cfg = RunConfig::from_toml_str(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.rho().unwrap(), Rho::Fixed(3.5));
        let text = format!("typo_field = 1\n{BASE}");
        assert!(RunConfig::from_toml_str(&text, Path::new(".")).is_err());
    }
}
