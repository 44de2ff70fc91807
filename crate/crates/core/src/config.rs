//! Experiment configuration (TOML) and its resolution into models.

use crate::error::{Error, Result};
use crate::levy::{presets, DnRule, LevyModel, MarkRegime, ModelKind, ModelSpec, MutationFunctionSpec, RescalingScheme};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// exponential lifetimes, drift -1, rescaled with d_n; Brownian limit
    CriticalExponential,
    Brownian,
    Stable,
    /// pre-limit base model given in `model.custom`, rescaled with d_n
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeName {
    B1,
    B2,
}

/// Mutation regime: β is the per-unit-depth mark rate of the limit under
/// B.1; κ the slope of f(u) = min(1, κu) under B.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarksConfig {
    pub regime: RegimeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

impl Default for MarksConfig {
    fn default() -> Self {
        MarksConfig { regime: RegimeName::B1, beta: Some(0.0), kappa: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ModelSpec>,
    #[serde(default)]
    pub marks: MarksConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescalingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u64>>,
    #[serde(default = "half_square")]
    pub d_n: DnRule,
}

fn half_square() -> DnRule {
    DnRule::HalfSquare
}

impl Default for RescalingConfig {
    fn default() -> Self {
        RescalingConfig { n: Some(100), n_list: None, d_n: DnRule::HalfSquare }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyConfig {
    pub tau: f64,
    pub eps: f64,
    /// fixed population size; drawn from the survival-conditioned law when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_n: Option<usize>,
    #[serde(default = "one_usize")]
    pub replicas: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngConfig {
    pub seed: u64,
}

impl Default for RngConfig {
    fn default() -> Self {
        RngConfig { seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub overwrite: bool,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: all_formats(), overwrite: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.start],
            k => (0..k).map(|i| self.start + (self.end - self.start) * i as f64 / (k - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowName {
    Unit,
    Survival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConfig {
    #[serde(default = "unit_window")]
    pub window: WindowName,
    #[serde(default = "one_usize")]
    pub draws: usize,
    /// Π table rows m = 0..=m_max, plus a remainder row
    #[serde(default = "three")]
    pub m_max: usize,
    /// chains used for Π when no closed form exists
    #[serde(default = "thousand")]
    pub chains: usize,
}

fn unit_window() -> WindowName {
    WindowName::Unit
}
fn three() -> usize {
    3
}
fn thousand() -> usize {
    1000
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { window: WindowName::Unit, draws: 1, m_max: 3, chains: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    ExcursionMarginal,
    GX,
    NuInit,
    MuK,
    LadderMu,
    Resolvent,
    JumpLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelsConfig {
    pub kernel: KernelName,
    /// evaluation grid of the kernel's free variable
    pub grid: GridConfig,
    /// fixed first argument (x for g^x / jump law / excursion marginal, a for μ^K)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<f64>,
    /// second fixed argument (a for g^x, l for the resolvent)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    /// evaluate the limit model instead of the rescaled one
    #[serde(default)]
    pub limit: bool,
    #[serde(default = "pi_samples")]
    pub pi_samples: usize,
}

fn pi_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Calibration,
    NuInit,
    Acceptance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub suite: Suite,
    #[serde(default = "five_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "four")]
    pub required: usize,
    #[serde(default = "tv_threshold")]
    pub tv_threshold: f64,
    #[serde(default = "samples")]
    pub samples: usize,
}

fn five_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn four() -> usize {
    4
}
fn tv_threshold() -> f64 {
    0.02
}
fn samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub rescaling: RescalingConfig,
    pub genealogy: GenealogyConfig,
    #[serde(default)]
    pub rng: RngConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_fn: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.genealogy;
        if !(g.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive (got {})", g.tau)));
        }
        if !(g.eps > 0.0 && g.eps < g.tau) {
            return Err(Error::Config(format!("eps must lie in (0, tau) (got {})", g.eps)));
        }
        if let DnRule::Power { alpha } = self.rescaling.d_n {
            if !(alpha > 0.0) {
                return Err(Error::Config("d_n power must be positive".into()));
            }
        }
        if self.n_values().iter().any(|&n| n == 0) {
            return Err(Error::Config("n must be positive".into()));
        }
        let m = &self.model;
        match m.family {
            Family::Brownian if !m.b.is_some_and(|b| b > 0.0) => {
                return Err(Error::Config("brownian family needs b > 0".into()))
            }
            Family::Stable if !m.alpha.is_some_and(|a| a > 1.0 && a < 2.0) => {
                return Err(Error::Config("stable family needs alpha in (1, 2)".into()))
            }
            Family::Custom if m.custom.is_none() => return Err(Error::Config("custom family needs model.custom".into())),
            _ => {}
        }
        match (m.marks.regime, m.marks.beta, m.marks.kappa) {
            (RegimeName::B1, Some(b), _) if b >= 0.0 => {}
            (RegimeName::B2, _, Some(k)) if k >= 0.0 => {}
            _ => return Err(Error::Config("marks need beta >= 0 (B1) or kappa >= 0 (B2)".into())),
        }
        if let Some(gr) = &self.scale_fn {
            if gr.start < 0.0 || gr.end < gr.start {
                return Err(Error::Config("scale_fn grid needs 0 <= start <= end".into()));
            }
        }
        Ok(())
    }

    /// n values of the run: `n_list` if given, else `n`.
    pub fn n_values(&self) -> Vec<u64> {
        match (&self.rescaling.n_list, self.rescaling.n) {
            (Some(v), _) => v.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => vec![],
        }
    }

    pub fn first_n(&self) -> Result<u64> {
        self.n_values().first().copied().ok_or_else(|| Error::Config("rescaling.n is required".into()))
    }

    fn gaussian_b(&self) -> f64 {
        match self.model.family {
            Family::Brownian => self.model.b.unwrap_or(1.0),
            Family::CriticalExponential => 1.0,
            Family::Stable => 0.0,
            Family::Custom => self.model.custom.as_ref().map_or(0.0, |c| c.gaussian_b),
        }
    }

    /// Mark regime of the limit in local-time units (θ = βb²/2 under B.1).
    pub fn regime(&self) -> MarkRegime {
        let b = self.gaussian_b();
        match self.model.marks.regime {
            RegimeName::B1 => {
                let beta = self.model.marks.beta.unwrap_or(0.0);
                let theta = if b > 0.0 { 0.5 * beta * b * b } else { beta };
                MarkRegime::B1 { theta }
            }
            RegimeName::B2 => MarkRegime::B2 { kappa: self.model.marks.kappa.unwrap_or(0.0) },
        }
    }

    /// Rescaled pre-limit model at rank n.
    pub fn prelimit_model(&self, n: u64) -> Result<(LevyModel, RescalingScheme)> {
        let regime = self.regime();
        let d_n = self.rescaling.d_n.d_n(n);
        match self.model.family {
            Family::CriticalExponential => {
                if self.rescaling.d_n == DnRule::HalfSquare {
                    return presets::critical_exponential(n, regime);
                }
                let scheme = RescalingScheme::new(n, d_n, regime)?;
                let mutation = base_mutation(&scheme, regime);
                Ok((presets::exponential_base(mutation).rescale(&scheme)?, scheme))
            }
            Family::Custom => {
                let spec = self.model.custom.clone().expect("validated");
                if spec.kind != ModelKind::PreLimit {
                    return Err(Error::Config("custom model must be pre-limit to be rescaled".into()));
                }
                let scheme = RescalingScheme::new(n, d_n, regime)?;
                let spec = ModelSpec { mutation: base_mutation(&scheme, regime), ..spec };
                Ok((LevyModel::new(spec)?.rescale(&scheme)?, scheme))
            }
            f => Err(Error::Config(format!("family {f:?} has no pre-limit model"))),
        }
    }

    /// Limit model (Brownian limit for the critical exponential family).
    pub fn limit_model(&self) -> Result<LevyModel> {
        let m = match self.model.family {
            Family::CriticalExponential => presets::brownian(1.0),
            Family::Brownian => presets::brownian(self.model.b.unwrap_or(1.0)),
            Family::Stable => presets::stable(self.model.alpha.unwrap_or(1.5))?,
            Family::Custom => {
                let spec = self.model.custom.clone().expect("validated");
                if spec.kind != ModelKind::Limit {
                    return Err(Error::Config("custom model is not a limit model".into()));
                }
                LevyModel::new(spec)?
            }
        };
        m.with_mutation(self.regime().limit_mutation())
    }
}

fn base_mutation(scheme: &RescalingScheme, regime: MarkRegime) -> MutationFunctionSpec {
    match regime {
        MarkRegime::B1 { .. } => MutationFunctionSpec::Constant { theta: scheme.theta_n() },
        MarkRegime::B2 { kappa } => MutationFunctionSpec::LinearCapped { slope: kappa / scheme.n as f64 },
    }
}
