//! Run configuration: one sectioned TOML file per experiment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hesscov::experiments::{DuffingExperiment, OemExperiment};
use hesscov::kkt::SolverOptions;
use hesscov::mcmc::ChainSettings;
use serde::{Deserialize, Serialize};

use crate::Usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Output-error study (Van der Pol or linear dynamics).
    pub experiment: Option<OemExperiment>,
    /// Joint MAP study of the stochastic Duffing oscillator.
    pub duffing: Option<DuffingExperiment>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub report: ReportSection,
    pub montecarlo: Option<MonteCarloSection>,
    pub chain: Option<ChainSettings>,
    /// Gaussian control target for `mcmc` without data.
    pub gaussian: Option<GaussianSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub targets: Option<Vec<String>>,
    pub correlations: bool,
    pub full_columns: bool,
    pub band: Option<BandSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub component: usize,
    #[serde(default = "two")]
    pub multiplier: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    #[serde(default = "realizations")]
    pub realizations: usize,
    pub targets: Option<Vec<String>>,
}

fn realizations() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// The study a config describes.
pub enum Study<'a> {
    Oem(&'a OemExperiment),
    Duffing(&'a DuffingExperiment),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.solver.validate()?;
        if let Some(e) = &cfg.experiment {
            e.validate()?;
        }
        if let Some(d) = &cfg.duffing {
            d.validate()?;
        }
        if let Some(c) = &cfg.chain {
            c.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn study(&self) -> Result<Study<'_>> {
        match (&self.experiment, &self.duffing) {
            (Some(e), None) => Ok(Study::Oem(e)),
            (None, Some(d)) => Ok(Study::Duffing(d)),
            (Some(_), Some(_)) => bail!(Usage("config has both [experiment] and [duffing]; keep one".into())),
            (None, None) => bail!(Usage("config needs an [experiment] or a [duffing] section".into())),
        }
    }
}
