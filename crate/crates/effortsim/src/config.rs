//! Experiment configuration (JSON). Relative paths resolve against the
//! config file's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use effortsim_core::predictors::MlpSettings;
use effortsim_core::{BenefitFn, EffortParams, FeatureFilter};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Ridge,
    Tree,
    Mlp,
    Constrained,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub model: ModelKind,
    #[serde(default = "all_features")]
    pub features: FeatureFilter,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub mlp: Option<MlpSettings>,
    /// Constant prediction; defaults to the training label mean.
    #[serde(default)]
    pub value: Option<f64>,
}

fn all_features() -> FeatureFilter {
    FeatureFilter::All
}

impl ModelSpec {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(200.0)
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth.unwrap_or(5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: default_fraction(),
        }
    }
}

fn default_fraction() -> f64 {
    0.7
}

/// Synthetic data drawn over the configured schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub group_sizes: Vec<usize>,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: Option<PathBuf>,
    pub schema: PathBuf,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub seed: u64,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub effort: EffortParams,
    #[serde(default)]
    pub benefit: BenefitFn,
    #[serde(default = "default_delta_points")]
    pub delta_points: usize,
    #[serde(default)]
    pub bounded_effort_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub threshold_reward_grid: Option<Vec<f64>>,
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "all_features")]
    pub tau_features: FeatureFilter,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Minority group name; defaults to the smallest training group.
    #[serde(default)]
    pub minority: Option<String>,
    #[serde(default)]
    pub centralization_threshold: Option<f64>,
    #[serde(default = "default_ssi_threshold")]
    pub ssi_threshold: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_delta_points() -> usize {
    20
}

fn default_tau_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 5.0]
}

fn default_beta() -> f64 {
    0.5
}

fn default_ssi_threshold() -> f64 {
    1e-6
}

fn default_bins() -> usize {
    10
}

fn sorted(grid: &[f64]) -> bool {
    grid.windows(2).all(|w| w[0] <= w[1])
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.schema);
        if let Some(d) = cfg.data.as_mut() {
            resolve(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = fs::read(path).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| HarnessError::config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::parse(text, base)?, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.data.is_some() == self.synthetic.is_some() {
            return bad("exactly one of `data` and `synthetic` must be set".into());
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!("train_fraction {} not in (0, 1)", self.split.train_fraction));
        }
        self.effort.validate().map_err(|e| HarnessError::config(e.to_string()))?;
        if self.models.is_empty() {
            return bad("no models configured".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            let safe = !m.name.is_empty()
                && m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !safe {
                return bad(format!("model name `{}` must be nonempty [A-Za-z0-9_-]", m.name));
            }
            if !names.insert(m.name.as_str()) {
                return bad(format!("duplicate model name `{}`", m.name));
            }
            if !(m.lambda() >= 0.0 && m.lambda().is_finite()) {
                return bad(format!("model `{}`: lambda must be >= 0", m.name));
            }
            if m.tau.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
                return bad(format!("model `{}`: tau must be >= 0", m.name));
            }
        }
        if self.delta_points == 0 {
            return bad("delta_points must be positive".into());
        }
        for (name, grid) in [
            ("bounded_effort_grid", &self.bounded_effort_grid),
            ("threshold_reward_grid", &self.threshold_reward_grid),
        ] {
            if let Some(g) = grid {
                if g.is_empty() || !sorted(g) || g.iter().any(|v| v.is_nan()) {
                    return bad(format!("{name} must be nonempty and sorted ascending"));
                }
            }
        }
        if self.bounded_effort_grid.as_ref().is_some_and(|g| g[0] < 0.0) {
            return bad("bounded_effort_grid must be >= 0".into());
        }
        if self.tau_grid.is_empty() || !sorted(&self.tau_grid) || self.tau_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("tau_grid must be nonempty, sorted and >= 0".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {} not in (0, 1)", self.beta));
        }
        if !(self.ssi_threshold >= 0.0) || self.histogram_bins == 0 {
            return bad("ssi_threshold must be >= 0 and histogram_bins positive".into());
        }
        Ok(())
    }
}
