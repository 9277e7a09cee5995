//! JSON experiment configuration:
//! `{model, initial_data, chain, scheme, experiment}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::convergence::{steps_per_unit, ConvergenceSetup, DepthPolicy};
use super::stability::StabilitySetup;
use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::model::{GrowthSpec, ModelSpec, RegimeTerms, StabilityParams};
use crate::phase::InitialData;
use crate::scheme::SchemeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub dim: usize,
    pub regimes: Vec<RegimeTerms>,
    pub growth: GrowthSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Row-major generator.
    pub generator: Vec<Vec<f64>>,
    /// 1-based initial regime.
    #[serde(default = "one")]
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    #[default]
    Rule,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Path id used by `simulate`.
    #[serde(default)]
    pub path_id: u64,
    #[serde(default)]
    pub dt_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ref: Option<f64>,
    #[serde(default)]
    pub depth_policy: DepthMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            paths: default_paths(),
            seed: 0,
            path_id: 0,
            dt_list: vec![],
            dt_ref: None,
            depth_policy: DepthMode::Rule,
            fit_window: None,
            threads: None,
        }
    }
}

fn one() -> usize {
    1
}

fn default_paths() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub initial_data: InitialData,
    pub chain: ChainConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        let m = &self.model;
        m.growth.validate()?;
        let mut spec = ModelSpec::declarative(m.dim, &m.regimes, m.growth)?;
        if let Some(s) = &m.stability {
            s.validate()?;
            if s.alpha.len() != m.regimes.len() {
                return Err(Error::config("stability alpha/beta length must match the regime count"));
            }
            spec = spec.with_stability(s.clone());
        }
        Ok(spec)
    }

    pub fn build_chain(&self) -> Result<MarkovChain> {
        let chain = MarkovChain::from_rows(&self.chain.generator).map_err(|e| Error::config(e.to_string()))?;
        if chain.n_states() != self.model.regimes.len() {
            return Err(Error::config(format!(
                "chain has {} states but the model has {} regimes",
                chain.n_states(),
                self.model.regimes.len()
            )));
        }
        Ok(chain)
    }

    /// 0-based start regime.
    pub fn start_regime(&self) -> Result<usize> {
        let s = self.chain.start;
        if s == 0 || s > self.chain.generator.len() {
            return Err(Error::config(format!("start regime {s} outside 1..={}", self.chain.generator.len())));
        }
        Ok(s - 1)
    }

    pub fn depth_policy(&self) -> DepthPolicy {
        match self.experiment.depth_policy {
            DepthMode::Rule => DepthPolicy::Rule { k_cal: self.scheme.k_cal, alpha_decay: self.scheme.alpha_decay },
            DepthMode::Fixed => DepthPolicy::Fixed { k: self.scheme.k },
        }
    }

    pub fn convergence_setup(&self, seed: u64, threads: Option<usize>) -> Result<ConvergenceSetup> {
        let e = &self.experiment;
        let dt_ref = e.dt_ref.ok_or_else(|| Error::config("experiment.dt_ref is required for converge"))?;
        if e.dt_list.is_empty() {
            return Err(Error::config("experiment.dt_list is required for converge"));
        }
        Ok(ConvergenceSetup {
            dt_list: e.dt_list.clone(),
            dt_ref,
            depth: self.depth_policy(),
            paths: e.paths,
            t_final: self.scheme.t_final,
            lambda: self.scheme.lambda,
            start_regime: self.start_regime()?,
            seed,
            kernel_recursion: self.scheme.kernel_recursion,
            threads: threads.or(e.threads),
        })
    }

    pub fn stability_setup(&self, seed: u64, threads: Option<usize>) -> Result<StabilitySetup> {
        let e = &self.experiment;
        Ok(StabilitySetup {
            l: self.scheme.l,
            k: self.scheme.k,
            lambda: self.scheme.lambda,
            t_final: self.scheme.t_final,
            paths: e.paths,
            start_regime: self.start_regime()?,
            seed,
            fit_window: e.fit_window.map(|[a, b]| (a, b)),
            record_every: self.scheme.record_every,
            kernel_recursion: self.scheme.kernel_recursion,
            threads: threads.or(e.threads),
        })
    }

    /// Checks the scheme's step size is of the form `1/l` in `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        steps_per_unit(self.scheme.dt())?;
        self.build_model()?;
        self.build_chain()?;
        self.start_regime()?;
        Ok(())
    }
}
