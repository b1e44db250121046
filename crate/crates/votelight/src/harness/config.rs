//! Run configuration and controller construction.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::EnsembleController;
use crate::llm::backend::{DeterministicMockBackend, StochasticMockBackend};
use crate::llm::{LlmPolicy, LlmPolicyConfig};
use crate::metrics::MetricsError;
use crate::mplight::{MPLightAgent, MPLightConfig, MPLightPolicy, WeightsError};
use crate::policy::{FixedTimePolicy, MaxPressurePolicy, Policy};
use crate::scenario::{ScenarioError, ScenarioFile};
use crate::sim::{SimConfig, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Fixed,
    MaxPressure,
    MPLight,
    Llm,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Fixed,
        ControllerKind::MaxPressure,
        ControllerKind::MPLight,
        ControllerKind::Llm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "fixed",
            ControllerKind::MaxPressure => "maxpressure",
            ControllerKind::MPLight => "mplight",
            ControllerKind::Llm => "llm",
        }
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(ControllerKind::Fixed),
            "maxpressure" => Ok(ControllerKind::MaxPressure),
            "mplight" => Ok(ControllerKind::MPLight),
            "llm" => Ok(ControllerKind::Llm),
            other => Err(format!(
                "unknown controller {other:?}; expected fixed, maxpressure, mplight or llm"
            )),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LlmBackendKind {
    /// Always answers the pressure-optimal phase.
    MockDeterministic,
    /// Pressure-optimal with a seeded per-call error rate.
    MockStochastic { error_rate: f64 },
    /// Chat-completions endpoint; needs the `http-backend` feature.
    Http { base_url: String },
}

impl Default for LlmBackendKind {
    fn default() -> Self {
        LlmBackendKind::MockDeterministic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub backend: LlmBackendKind,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_seconds: u64,
    pub retries: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let p = LlmPolicyConfig::default();
        LlmSettings {
            backend: LlmBackendKind::default(),
            model: p.model,
            temperature: p.temperature,
            max_tokens: p.max_tokens,
            timeout_seconds: p.timeout_seconds,
            retries: p.retries,
        }
    }
}

/// Everything one run needs; serialized verbatim into the run summary so a
/// run is reproducible from its outputs alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub label: Option<String>,
    pub scenario: ScenarioFile,
    pub controller: ControllerKind,
    pub agents: usize,
    pub seed: u64,
    pub duration_seconds: u32,
    pub tau_seconds: u32,
    #[serde(default)]
    pub llm: LlmSettings,
    /// Directory holding `weights_agent{i}.bin` files for mplight runs.
    #[serde(default)]
    pub weights_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(scenario: ScenarioFile, controller: ControllerKind) -> Self {
        let defaults = SimConfig::default();
        RunConfig {
            label: None,
            scenario,
            controller,
            agents: 1,
            seed: 0,
            duration_seconds: defaults.duration_seconds,
            tau_seconds: defaults.tau_seconds,
            llm: LlmSettings::default(),
            weights_dir: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.controller.as_str().to_string())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            duration_seconds: self.duration_seconds,
            tau_seconds: self.tau_seconds,
            seed: self.seed,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.agents == 0 {
            return Err(HarnessError::InvalidConfig("agents must be at least 1".into()));
        }
        self.sim_config()
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let violations = self.scenario.validate();
        if !violations.is_empty() {
            return Err(HarnessError::Scenario(ScenarioError::Invalid(violations)));
        }
        Ok(())
    }
}

/// Stable per-agent seed derivation (splitmix64 of base + index).
pub fn derive_seed(base: u64, agent: usize) -> u64 {
    let mut z = base.wrapping_add((agent as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn build_agent(config: &RunConfig, index: usize) -> Result<Box<dyn Policy>, HarnessError> {
    let seed = derive_seed(config.seed, index);
    Ok(match config.controller {
        ControllerKind::Fixed => Box::new(FixedTimePolicy::default()),
        ControllerKind::MaxPressure => Box::new(MaxPressurePolicy),
        ControllerKind::MPLight => {
            let mut agent = MPLightAgent::new(MPLightConfig { seed, ..Default::default() });
            if let Some(dir) = &config.weights_dir {
                agent.load_weights(dir.join(format!("weights_agent{index}.bin")))?;
            }
            Box::new(MPLightPolicy::new(agent, false))
        }
        ControllerKind::Llm => {
            let policy_config = LlmPolicyConfig {
                model: config.llm.model.clone(),
                temperature: config.llm.temperature,
                max_tokens: config.llm.max_tokens,
                timeout_seconds: config.llm.timeout_seconds,
                retries: config.llm.retries,
            };
            let backend: Box<dyn crate::llm::Backend> = match &config.llm.backend {
                LlmBackendKind::MockDeterministic => Box::new(DeterministicMockBackend),
                LlmBackendKind::MockStochastic { error_rate } => {
                    Box::new(StochasticMockBackend::new(seed, *error_rate))
                }
                #[cfg(feature = "http-backend")]
                LlmBackendKind::Http { base_url } => {
                    Box::new(crate::llm::backend::HttpBackend::new(base_url.clone()))
                }
                #[cfg(not(feature = "http-backend"))]
                LlmBackendKind::Http { .. } => {
                    return Err(HarnessError::InvalidConfig(
                        "http backend requires the http-backend feature".into(),
                    ))
                }
            };
            Box::new(LlmPolicy::new(backend, policy_config))
        }
    })
}

/// Instantiate the N-agent ensemble for a run.
pub fn build_controller(config: &RunConfig) -> Result<EnsembleController, HarnessError> {
    let agents = (0..config.agents)
        .map(|i| build_agent(config, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleController::new(agents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_grid, DemandProfile, SyntheticGridSpec};

    fn scenario() -> ScenarioFile {
        generate_grid(&SyntheticGridSpec {
            rows: 1,
            cols: 1,
            demand_profile: DemandProfile::Uniform,
            base_lambda: 0.01,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn controller_names_round_trip() {
        for kind in ControllerKind::ALL {
            assert_eq!(kind.as_str().parse::<ControllerKind>().unwrap(), kind);
        }
        assert!("dqn".parse::<ControllerKind>().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut c = RunConfig::new(scenario(), ControllerKind::Llm);
        c.agents = 5;
        c.llm.backend = LlmBackendKind::MockStochastic { error_rate: 0.2 };
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn zero_agents_is_rejected() {
        let mut c = RunConfig::new(scenario(), ControllerKind::Fixed);
        c.agents = 0;
        assert!(matches!(c.validate(), Err(HarnessError::InvalidConfig(_))));
    }

    #[test]
    fn duration_must_divide_into_windows() {
        let mut c = RunConfig::new(scenario(), ControllerKind::Fixed);
        c.duration_seconds = 100;
        c.tau_seconds = 30;
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..10).map(|i| derive_seed(7, i)).collect();
        let b: Vec<u64> = (0..10).map(|i| derive_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut uniq = a.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), a.len());
    }

    #[test]
    fn build_controller_has_requested_agent_count() {
        let mut c = RunConfig::new(scenario(), ControllerKind::MaxPressure);
        c.agents = 5;
        assert_eq!(build_controller(&c).unwrap().agent_count(), 5);
    }
}
