//! Experiment configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use jumpbsde::verify::FdGrid;
use jumpbsde::zoo::{MeasureChoice, ZooModel};
use jumpbsde::SolverSettings;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub model: ZooModel,
    pub measure: MeasureChoice,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub checks: ChecksConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_ladder: Vec<f64>,
    pub n_steps: usize,
    pub n_paths: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t: 0.0, x: vec![0.0], x_ladder: vec![0.0, 1.0, 2.0, 4.0, 8.0], n_steps: 50, n_paths: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    /// Level of the main path bundle.
    pub k: u32,
    /// Levels of the truncation study.
    pub ks: Vec<u32>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { k: 32, ks: vec![2, 4, 8, 16, 32] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub probe: Option<ProbeCheck>,
    pub jump_representation: Option<JumpCheck>,
    pub truncation: Option<TruncationCheck>,
    pub moments: Option<MomentsCheck>,
    pub up_moment: Option<UpMomentCheck>,
    pub u_class: Option<UClassCheck>,
    pub uniqueness: Option<UniquenessCheck>,
    pub picard: Option<PicardCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeCheck {
    pub t: f64,
    pub xs: Vec<f64>,
    /// Compare against the field of the main solve.
    pub reference: bool,
    pub fd: Option<FdGrid>,
    pub fd_tolerance: f64,
}

impl Default for ProbeCheck {
    fn default() -> Self {
        Self { t: 0.0, xs: vec![-1.0, 0.0, 1.0, 2.0], reference: false, fd: None, fd_tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpCheck {
    pub max_paths: usize,
    pub threshold: f64,
}

impl Default for JumpCheck {
    fn default() -> Self {
        Self { max_paths: 2000, threshold: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationCheck {
    pub min_spearman: f64,
}

impl Default for TruncationCheck {
    fn default() -> Self {
        Self { min_spearman: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsCheck {
    pub p: Vec<u32>,
    /// Second start for the coupled-difference variant.
    pub second_x: Option<Vec<f64>>,
    pub max_residual: f64,
}

impl Default for MomentsCheck {
    fn default() -> Self {
        Self { p: vec![2], second_x: None, max_residual: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpMomentCheck {
    pub p: Vec<u32>,
}

impl Default for UpMomentCheck {
    fn default() -> Self {
        Self { p: vec![2, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UClassCheck {
    pub n_pairs: usize,
    pub half_width: f64,
}

impl Default for UClassCheck {
    fn default() -> Self {
        Self { n_pairs: 2000, half_width: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessCheck {
    pub max_outer: usize,
    /// The second initialization is the constant field at this level.
    pub offset: f64,
}

impl Default for UniquenessCheck {
    fn default() -> Self {
        Self { max_outer: 10, offset: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardCheck {
    pub max_ratio: f64,
    /// Fixed window length; the default window is 1/(4C²).
    pub window: Option<f64>,
}

impl Default for PicardCheck {
    fn default() -> Self {
        Self { max_ratio: 0.6, window: None }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("`{key}`: {msg}")));
        let g = &self.grid;
        if g.n_steps == 0 {
            return bad("grid.n_steps", "must be positive".into());
        }
        if g.n_paths < 2 {
            return bad("grid.n_paths", "at least two paths are needed".into());
        }
        if g.x.is_empty() {
            return bad("grid.x", "start point is empty".into());
        }
        if self.truncation.k == 0 {
            return bad("truncation.k", "must be positive".into());
        }
        if self.truncation.ks.is_empty() || self.truncation.ks.windows(2).any(|w| w[1] <= w[0]) || self.truncation.ks[0] == 0 {
            return bad("truncation.ks", format!("levels must be positive and increasing, got {:?}", self.truncation.ks));
        }
        if let Some(m) = &self.checks.moments {
            if let Some(p) = m.p.iter().find(|p| **p != 2 && **p != 4) {
                return bad("checks.moments.p", format!("orders are 2 or 4, got {p}"));
            }
        }
        if let Some(m) = &self.checks.up_moment {
            if let Some(p) = m.p.iter().find(|p| **p != 2 && **p != 4) {
                return bad("checks.up_moment.p", format!("orders are 2 or 4, got {p}"));
            }
        }
        let measure = self.measure.build().map_err(|e| CliError::Config(format!("`measure`: {e}")))?;
        let spec = self.model.build(measure).map_err(|e| CliError::Config(format!("`model`: {e}")))?;
        if g.x.len() != spec.dims.state {
            return bad("grid.x", format!("model state dimension is {}, start has {}", spec.dims.state, g.x.len()));
        }
        let gamma = spec.coupling == jumpbsde::CouplingMode::GammaIntegral;
        if self.checks.uniqueness.is_some() && !gamma {
            return bad("checks.uniqueness", "the outer iteration needs a gamma-integral coupling model".into());
        }
        if self.checks.jump_representation.is_some() && !gamma {
            return bad("checks.jump_representation", "the regressed jump channel needs a gamma-integral coupling model".into());
        }
        if let Some(x2) = self.checks.moments.as_ref().and_then(|m| m.second_x.as_ref()) {
            if x2.len() != spec.dims.state {
                return bad("checks.moments.second_x", format!("model state dimension is {}", spec.dims.state));
            }
        }
        if !(g.t >= 0.0 && g.t < spec.horizon) {
            return bad("grid.t", format!("must lie in [0, {})", spec.horizon));
        }
        Ok(())
    }
}
