//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lfm_core::kalman::TimeGrid;
use lfm_core::lfm::{ContinuousModel, MeasurementModel, OutputModelSpec, StateLayout};
use lfm_core::priors::{ForcePrior, PriorParams, PriorRegistry};
use lfm_core::slds::{build_model_bank, transition_matrix, ModelBank, ResetPrior, SwitchTransitionSpec};

use crate::error::{CliError, Result};

pub const DEFAULT_THRESHOLD: f64 = lfm_core::slds::DEFAULT_SWITCH_THRESHOLD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_model: OutputModelConfig,
    pub force_prior: ForcePriorConfig,
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slds: Option<SldsConfig>,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputModelConfig {
    /// Number of outputs `D`.
    pub outputs: usize,
    /// Number of latent forces `R`.
    pub forces: usize,
    pub masses: Vec<f64>,
    pub dampings: Vec<f64>,
    pub springs: Vec<f64>,
    /// `D` rows of `R` sensitivities.
    pub sensitivities: Vec<Vec<f64>>,
    /// Prior variance of each output position and rate at the first time.
    #[serde(default = "one")]
    pub initial_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcePriorConfig {
    /// Registry name, e.g. `matern32` or `se_taylor`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// One length-scale per force.
    pub lengthscales: Vec<f64>,
    #[serde(default = "one")]
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub variance: f64,
}

/// A probability given once for all regular models or once per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerModel {
    All(f64),
    Each(Vec<f64>),
}

impl PerModel {
    fn expand(&self, n: usize) -> Option<Vec<f64>> {
        match self {
            PerModel::All(v) => Some(vec![*v; n]),
            PerModel::Each(v) if v.len() == n => Some(v.clone()),
            PerModel::Each(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SldsConfig {
    /// Candidate length-scales; every assignment to the forces is a model.
    pub lengthscales: Vec<f64>,
    /// Probability that a regular model persists for one step.
    pub stay: PerModel,
    /// Probability that a reset hands over to each regular model; uniform
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub reset_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Components per model kept by the forward filter.
    #[serde(default = "default_adf")]
    pub adf_budget: usize,
    /// Components per model kept by the backward smoother.
    #[serde(default = "default_ec")]
    pub ec_budget: usize,
    /// Forward-filter budget used by the fit objective.
    #[serde(default = "default_fit_budget")]
    pub fit_budget: usize,
}

fn default_adf() -> usize {
    3
}

fn default_ec() -> usize {
    3
}

fn default_fit_budget() -> usize {
    2
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { adf_budget: default_adf(), ec_budget: default_ec(), fit_budget: default_fit_budget() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreeParam {
    #[serde(rename = "output_model.masses")]
    Masses,
    #[serde(rename = "output_model.dampings")]
    Dampings,
    #[serde(rename = "output_model.springs")]
    Springs,
    #[serde(rename = "output_model.initial_variance")]
    InitialVariance,
    #[serde(rename = "force_prior.lengthscales")]
    Lengthscales,
    #[serde(rename = "force_prior.variance")]
    PriorVariance,
    #[serde(rename = "noise.variance")]
    NoiseVariance,
    #[serde(rename = "slds.lengthscales")]
    SldsLengthscales,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::Masses => "output_model.masses",
            FreeParam::Dampings => "output_model.dampings",
            FreeParam::Springs => "output_model.springs",
            FreeParam::InitialVariance => "output_model.initial_variance",
            FreeParam::Lengthscales => "force_prior.lengthscales",
            FreeParam::PriorVariance => "force_prior.variance",
            FreeParam::NoiseVariance => "noise.variance",
            FreeParam::SldsLengthscales => "slds.lengthscales",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Positive parameters optimized on the log scale; all others stay fixed.
    #[serde(default)]
    pub free: Vec<FreeParam>,
}

fn positive(path: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(i) => Err(CliError::config(format!("{path}[{i}]"), format!("must be positive and finite, got {}", values[i]))),
        None => Ok(()),
    }
}

fn expect_len(path: &str, got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::config(path, format!("expected {want} entries ({what}), got {got}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (compact) serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn regular_models(&self) -> Option<usize> {
        let slds = self.slds.as_ref()?;
        u32::try_from(self.output_model.forces).ok().and_then(|r| slds.lengthscales.len().checked_pow(r))
    }

    pub fn validate(&self) -> Result<()> {
        let om = &self.output_model;
        let (d, r) = (om.outputs, om.forces);
        if d == 0 {
            return Err(CliError::config("output_model.outputs", "need at least one output"));
        }
        if r == 0 {
            return Err(CliError::config("output_model.forces", "need at least one force"));
        }
        expect_len("output_model.masses", om.masses.len(), d, "output_model.outputs")?;
        expect_len("output_model.dampings", om.dampings.len(), d, "output_model.outputs")?;
        expect_len("output_model.springs", om.springs.len(), d, "output_model.outputs")?;
        expect_len("output_model.sensitivities", om.sensitivities.len(), d, "rows = output_model.outputs")?;
        for (i, row) in om.sensitivities.iter().enumerate() {
            expect_len(&format!("output_model.sensitivities[{i}]"), row.len(), r, "columns = output_model.forces")?;
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(CliError::config(format!("output_model.sensitivities[{i}][{j}]"), "must be finite"));
            }
        }
        positive("output_model.masses", &om.masses)?;
        positive("output_model.dampings", &om.dampings)?;
        positive("output_model.springs", &om.springs)?;
        positive("output_model.initial_variance", &[om.initial_variance])?;

        let fp = &self.force_prior;
        expect_len("force_prior.lengthscales", fp.lengthscales.len(), r, "output_model.forces")?;
        positive("force_prior.lengthscales", &fp.lengthscales)?;
        positive("force_prior.variance", &[fp.variance])?;
        self.force_priors(&fp.lengthscales)?;

        if !(self.noise.variance.is_finite() && self.noise.variance >= 0.0) {
            return Err(CliError::config("noise.variance", format!("must be non-negative, got {}", self.noise.variance)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CliError::config("threshold", format!("must lie in (0, 1), got {}", self.threshold)));
        }
        let inf = &self.inference;
        for (name, v) in [("adf_budget", inf.adf_budget), ("ec_budget", inf.ec_budget), ("fit_budget", inf.fit_budget)] {
            if v == 0 {
                return Err(CliError::config(format!("inference.{name}"), "must be at least 1"));
            }
        }
        if let Some(g) = &self.grid {
            if !(g.step.is_finite() && g.step > 0.0) {
                return Err(CliError::config("grid.step", format!("must be positive, got {}", g.step)));
            }
            if g.count == 0 {
                return Err(CliError::config("grid.count", "must be at least 1"));
            }
            if !g.start.is_finite() {
                return Err(CliError::config("grid.start", "must be finite"));
            }
        }
        if let Some(s) = &self.slds {
            if s.lengthscales.is_empty() {
                return Err(CliError::config("slds.lengthscales", "need at least one length-scale"));
            }
            positive("slds.lengthscales", &s.lengthscales)?;
            positive("slds.reset_scale", &[s.reset_scale])?;
            self.switch_spec()?;
        }
        for p in &self.fit.free {
            if *p == FreeParam::SldsLengthscales && self.slds.is_none() {
                return Err(CliError::config("fit.free", "`slds.lengthscales` is free but there is no slds section"));
            }
        }
        Ok(())
    }

    fn output_spec(&self) -> Result<OutputModelSpec> {
        let om = &self.output_model;
        let flat: Vec<f64> = om.sensitivities.iter().flatten().copied().collect();
        let s = DMatrix::from_row_slice(om.outputs, om.forces, &flat);
        OutputModelSpec::new(om.masses.clone(), om.dampings.clone(), om.springs.clone(), s)
            .map_err(|e| CliError::from_core_config("output_model", e))
    }

    fn force_priors(&self, lengthscales: &[f64]) -> Result<Vec<Arc<dyn ForcePrior>>> {
        let fp = &self.force_prior;
        let registry = PriorRegistry::builtin();
        lengthscales
            .iter()
            .map(|&l| {
                let params = PriorParams { lengthscale: l, variance: fp.variance, nu: fp.nu, order: fp.order };
                registry.build(&fp.family, &params).map_err(|e| CliError::from_core_config("force_prior", e))
            })
            .collect()
    }

    /// The non-switching model with the configured force length-scales.
    pub fn model(&self) -> Result<ContinuousModel> {
        let spec = self.output_spec()?;
        let priors = self.force_priors(&self.force_prior.lengthscales)?;
        ContinuousModel::from_priors(&spec, &priors, self.output_model.initial_variance)
            .map_err(|e| CliError::from_core_config("output_model", e))
    }

    /// Observes every output of `layout` with the configured noise.
    pub fn measurement(&self, layout: &StateLayout) -> Result<MeasurementModel> {
        MeasurementModel::outputs(layout, self.noise.variance).map_err(|e| CliError::from_core_config("noise", e))
    }

    fn slds_section(&self) -> Result<&SldsConfig> {
        self.slds.as_ref().ok_or_else(|| CliError::config("slds", "this command needs an slds section"))
    }

    fn switch_spec(&self) -> Result<SwitchTransitionSpec> {
        let s = self.slds_section()?;
        let n = self
            .regular_models()
            .filter(|&n| n <= 4096)
            .ok_or_else(|| CliError::config("slds.lengthscales", "too many length-scale assignments"))?;
        let stay = s
            .stay
            .expand(n)
            .ok_or_else(|| CliError::config("slds.stay", format!("give one probability or {n} (one per regular model)")))?;
        let exit = match &s.exit {
            Some(v) => {
                expect_len("slds.exit", v.len(), n, "one per regular model")?;
                v.clone()
            }
            None => vec![1.0 / n as f64; n],
        };
        let spec = SwitchTransitionSpec { stay, exit };
        if let Err(e) = spec.validate() {
            let path = if spec.stay.iter().all(|p| (0.0..=1.0).contains(p)) { "slds.exit" } else { "slds.stay" };
            return Err(CliError::config(path, e.to_string()));
        }
        Ok(spec)
    }

    pub fn bank(&self) -> Result<(ModelBank, DMatrix<f64>)> {
        let s = self.slds_section()?;
        let spec = self.output_spec()?;
        let template = self.force_priors(&s.lengthscales[..1])?.remove(0);
        let reset = ResetPrior::Stationary { scale: s.reset_scale };
        let bank = build_model_bank(&spec, &s.lengthscales, &template, &reset, self.output_model.initial_variance)
            .map_err(|e| CliError::from_core_config("slds", e))?;
        let pi = transition_matrix(&self.switch_spec()?, bank.len()).map_err(|e| CliError::from_core_config("slds", e))?;
        Ok((bank, pi))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let g = self.grid.as_ref().ok_or_else(|| CliError::config("grid", "this command needs a grid section"))?;
        TimeGrid::regular(g.start, g.step, g.count, self.output_model.outputs).map_err(|e| CliError::from_core_config("grid", e))
    }

    pub fn param_values(&self, p: FreeParam) -> Vec<f64> {
        match p {
            FreeParam::Masses => self.output_model.masses.clone(),
            FreeParam::Dampings => self.output_model.dampings.clone(),
            FreeParam::Springs => self.output_model.springs.clone(),
            FreeParam::InitialVariance => vec![self.output_model.initial_variance],
            FreeParam::Lengthscales => self.force_prior.lengthscales.clone(),
            FreeParam::PriorVariance => vec![self.force_prior.variance],
            FreeParam::NoiseVariance => vec![self.noise.variance],
            FreeParam::SldsLengthscales => self.slds.as_ref().map(|s| s.lengthscales.clone()).unwrap_or_default(),
        }
    }

    /// Overwrites parameter `p`; `values` must have the length returned by
    /// [`Self::param_values`].
    pub fn set_param_values(&mut self, p: FreeParam, values: &[f64]) {
        let target = match p {
            FreeParam::Masses => &mut self.output_model.masses,
            FreeParam::Dampings => &mut self.output_model.dampings,
            FreeParam::Springs => &mut self.output_model.springs,
            FreeParam::InitialVariance => {
                self.output_model.initial_variance = values[0];
                return;
            }
            FreeParam::Lengthscales => &mut self.force_prior.lengthscales,
            FreeParam::PriorVariance => {
                self.force_prior.variance = values[0];
                return;
            }
            FreeParam::NoiseVariance => {
                self.noise.variance = values[0];
                return;
            }
            FreeParam::SldsLengthscales => match self.slds.as_mut() {
                Some(s) => &mut s.lengthscales,
                None => return,
            },
        };
        target.copy_from_slice(values);
    }
}
