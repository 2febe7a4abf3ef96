//! Run configuration: built-in defaults, optional JSON config file, and
//! command-line overrides, in ascending precedence.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use setsim_core::analysis::AucBin;
use setsim_core::machines::survival::{DEFAULT_ALPHA, DEFAULT_CENSOR_YEARS};
use setsim_core::machines::cv::GammaRule;
use setsim_core::matrix::DistanceMatrix;
use setsim_core::mmd::{median_gamma, DEFAULT_SIGMA, DEFAULT_TILE};
use setsim_core::explain::DEFAULT_MEDOIDS;
use std::path::Path;
use std::str::FromStr;

/// Kernel decay specification: the median rule or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Fixed(f64),
    Named(MedianName),
}

/// The only named rule is `median`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianName {
    Median,
}

impl GammaSpec {
    pub const MEDIAN: GammaSpec = GammaSpec::Named(MedianName::Median);

    pub fn is_median_rule(&self) -> bool {
        matches!(self, GammaSpec::Named(MedianName::Median))
    }

    pub fn rule(&self) -> GammaRule {
        match self {
            GammaSpec::Named(MedianName::Median) => GammaRule::MedianTimes(1.0),
            GammaSpec::Fixed(g) => GammaRule::Fixed(*g),
        }
    }

    /// Concrete decay rate for a full distance matrix.
    pub fn resolve(&self, d: &DistanceMatrix<f64>) -> f64 {
        match self {
            GammaSpec::Named(MedianName::Median) => median_gamma(d),
            GammaSpec::Fixed(g) => *g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GammaSpec::Fixed(g) = self {
            if !g.is_finite() || *g < 0.0 {
                bail!("gamma must be nonnegative, got {g}");
            }
        }
        Ok(())
    }
}

impl FromStr for GammaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(GammaSpec::MEDIAN);
        }
        s.parse::<f64>()
            .map(GammaSpec::Fixed)
            .map_err(|_| format!("expected 'median' or a number, got '{s}'"))
    }
}

impl std::fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaSpec::Named(MedianName::Median) => write!(f, "median"),
            GammaSpec::Fixed(g) => write!(f, "{g}"),
        }
    }
}

/// Every tunable the pipelines read. The seed fully determines fold
/// shuffles and draw-breaking; unknown config-file keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Patch-kernel bandwidth.
    pub sigma: f64,
    /// Distance-to-kernel decay.
    pub gamma: GammaSpec,
    /// Survival regularization weight.
    pub alpha: f64,
    /// SVM regularization bound.
    pub c: f64,
    /// Regression tube half-width.
    pub epsilon: f64,
    /// Retrieval depth.
    pub k: usize,
    /// Representative medoids per risk group.
    pub medoid_k: usize,
    /// Censoring horizon in years.
    pub t_censor_years: f64,
    /// AUC bin boundaries, assigned upward.
    pub auc_moderate: f64,
    pub auc_strong: f64,
    pub folds: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub threads: usize,
    /// Tile edge for the pairwise engine.
    pub tile: usize,
    /// Divide summed kernels by the operand count.
    pub rescale_sum: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sigma: DEFAULT_SIGMA,
            gamma: GammaSpec::MEDIAN,
            alpha: DEFAULT_ALPHA,
            c: 1.0,
            epsilon: 0.1,
            k: 5,
            medoid_k: DEFAULT_MEDOIDS,
            t_censor_years: DEFAULT_CENSOR_YEARS,
            auc_moderate: AucBin::MODERATE_THRESHOLD,
            auc_strong: AucBin::STRONG_THRESHOLD,
            folds: 5,
            val_frac: 0.1,
            seed: 0,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            tile: DEFAULT_TILE,
            rescale_sum: true,
        }
    }
}

impl RunConfig {
    /// Loads a JSON config file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&raw)
            .with_context(|| format!("config file {} does not match the schema", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            bail!("sigma must be positive");
        }
        self.gamma.validate()?;
        if !(self.alpha > 0.0) {
            bail!("alpha must be positive");
        }
        if !(self.c > 0.0) {
            bail!("C must be positive");
        }
        if self.epsilon < 0.0 {
            bail!("epsilon must be nonnegative");
        }
        if self.threads == 0 {
            bail!("threads must be a positive integer");
        }
        if self.k == 0 || self.medoid_k == 0 {
            bail!("k and medoid_k must be positive");
        }
        if !(self.t_censor_years > 0.0) {
            bail!("t_censor_years must be positive");
        }
        if self.folds < 2 {
            bail!("folds must be at least 2");
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            bail!("val_frac must lie in [0, 1)");
        }
        if self.tile == 0 {
            bail!("tile must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_values() {
        let config = RunConfig::default();
        assert_eq!(config.sigma, 10.0);
        assert!(config.gamma.is_median_rule());
        assert_eq!(config.alpha, 0.0625);
        assert_eq!(config.medoid_k, 25);
        assert_eq!(config.t_censor_years, 10.0);
        assert_eq!(config.auc_moderate, 0.6);
        assert_eq!(config.auc_strong, 0.7);
        assert!(config.threads >= 1);
    }

    #[test]
    fn gamma_spec_parses_median_and_numbers() {
        assert_eq!("median".parse::<GammaSpec>().unwrap(), GammaSpec::MEDIAN);
        assert_eq!("0.5".parse::<GammaSpec>().unwrap(), GammaSpec::Fixed(0.5));
        assert!("bogus".parse::<GammaSpec>().is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"sigma": 5.0, "wat": 1}"#).unwrap();
        assert!(RunConfig::from_file(&path).is_err());

        std::fs::write(&path, r#"{"sigma": 5.0, "gamma": "median"}"#).unwrap();
        let config = RunConfig::from_file(&path).unwrap();
        assert_eq!(config.sigma, 5.0);
        assert!(config.gamma.is_median_rule());

        std::fs::write(&path, r#"{"gamma": 0.25}"#).unwrap();
        let config = RunConfig::from_file(&path).unwrap();
        assert_eq!(config.gamma, GammaSpec::Fixed(0.25));
    }
}
