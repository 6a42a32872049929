use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::DesignSpec;
use crate::error::{DyadError, Result};

const MIN_GRID_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ols,
    OlsAdjusted,
    SingleIteration,
    FixedPoint,
    TwoStep,
    /// OLS on the effect-free outcome built from the same draws.
    OracleOls,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ols => "ols",
            EstimatorKind::OlsAdjusted => "ols_adjusted",
            EstimatorKind::SingleIteration => "single_iteration",
            EstimatorKind::FixedPoint => "fixed_point",
            EstimatorKind::TwoStep => "two_step",
            EstimatorKind::OracleOls => "oracle_ols",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| DyadError::Config(format!("unknown estimator '{s}'")))
    }

    /// Whether confidence intervals (and hence coverage) are defined.
    pub fn has_inference(self) -> bool {
        matches!(self, EstimatorKind::TwoStep | EstimatorKind::FixedPoint)
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![
        EstimatorKind::Ols,
        EstimatorKind::TwoStep,
        EstimatorKind::FixedPoint,
        EstimatorKind::OracleOls,
    ]
}

fn default_replications() -> usize {
    500
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_ci_level() -> f64 {
    0.95
}

/// Monte Carlo sweep description. An empty `n_grid` runs every design at its own `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub designs: Vec<DesignSpec>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| DyadError::Config(format!("invalid run configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DyadError::io(path, e))?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() {
            return Err(DyadError::Config("at least one design is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(DyadError::Config("at least one estimator is required".into()));
        }
        if self.replications == 0 {
            return Err(DyadError::Config("replications must be at least 1".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < MIN_GRID_N) {
            return Err(DyadError::Config(format!("n_grid entries must be at least {MIN_GRID_N}, got {n}")));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(DyadError::Config(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        let mut names: Vec<&str> = self.designs.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DyadError::Config("design names must be unique".into()));
        }
        for d in &self.designs {
            d.validate()?;
        }
        Ok(())
    }

    /// Sample sizes to run for design `d`.
    pub fn sizes_for(&self, d: &DesignSpec) -> Vec<usize> {
        if self.n_grid.is_empty() {
            vec![d.n]
        } else {
            self.n_grid.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"designs": [], "replicaions": 3}"#;
        assert!(matches!(RunConfig::from_json(text), Err(DyadError::Config(_))));
    }

    #[test]
    fn defaults_and_validation() {
        let design = serde_json::to_value(&crate::dgp::standard_designs()[0]).unwrap();
        let text = serde_json::json!({ "designs": [design], "replications": 2 }).to_string();
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.ci_level, 0.95);
        assert_eq!(cfg.sizes_for(&cfg.designs[0]), vec![100]);
        let bad = serde_json::json!({ "designs": [design], "n_grid": [5] }).to_string();
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = serde_json::json!({ "designs": [design], "estimators": ["lasso"] }).to_string();
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in [
            EstimatorKind::Ols,
            EstimatorKind::OlsAdjusted,
            EstimatorKind::SingleIteration,
            EstimatorKind::FixedPoint,
            EstimatorKind::TwoStep,
            EstimatorKind::OracleOls,
        ] {
            assert_eq!(EstimatorKind::parse(k.name()).unwrap(), k);
        }
        assert!(EstimatorKind::parse("gmm").is_err());
    }
}
